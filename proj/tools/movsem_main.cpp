// movsem: end-to-end trajectory similarity pipeline.
//
// Stages write their outputs plus a <stage>.manifest.json into the output
// directory; each stage checks the manifests of the stages it depends on and
// names the missing command when one is absent.

#include "movsem/config.hpp"
#include "movsem/io.hpp"
#include "movsem/tasks.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace movsem;

namespace {

struct CliContext {
    cfg::Config config;
    std::string out_dir;
    unsigned threads = 1;
};

std::string manifest_path(const CliContext& ctx, const std::string& stage) {
    return ctx.out_dir + "/" + stage + ".manifest.json";
}

void write_manifest(const CliContext& ctx, const std::string& stage, json extra) {
    extra["stage"] = stage;
    extra["config_hash"] = ctx.config.hash();
    std::ofstream out(manifest_path(ctx, stage));
    if (!out) throw DataError("cannot write manifest for stage " + stage);
    out << extra.dump(2) << '\n';
}

json require_manifest(const CliContext& ctx, const std::string& stage) {
    std::ifstream in(manifest_path(ctx, stage));
    if (!in) {
        throw DataError("missing artifact of stage '" + stage + "': run `movsem " + stage +
                        "` first");
    }
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw DataError("corrupt manifest for stage " + stage);
    return j;
}

geo::Region config_region(const cfg::Config& c) {
    return geo::Region::from_lonlat(c.get_double("data.lon_min"), c.get_double("data.lon_max"),
                                    c.get_double("data.lat_min"), c.get_double("data.lat_max"));
}

enc::EncoderMode encoder_mode_of(const std::string& s) {
    if (s == "hierarchical") return enc::EncoderMode::kHierarchical;
    if (s == "flat") return enc::EncoderMode::kFlat;
    throw ConfigError("train.encoder_mode must be hierarchical or flat, got " + s);
}

feat::FeatureMode feature_mode_of(const std::string& s) {
    if (s == "full") return feat::FeatureMode::kFull;
    if (s == "cell_only") return feat::FeatureMode::kCellOnly;
    throw ConfigError("train.feature_mode must be full or cell_only, got " + s);
}

moco::AugmentKind augment_of(const std::string& s) {
    if (s == "cga") return moco::AugmentKind::kCga;
    if (s == "random") return moco::AugmentKind::kRandomMask;
    throw ConfigError("train.augment must be cga or random, got " + s);
}

moco::MocoConfig moco_config(const CliContext& ctx) {
    const auto& c = ctx.config;
    moco::MocoConfig m;
    m.queue_size = static_cast<std::size_t>(c.get_int("train.queue_size"));
    m.momentum = c.get_double("train.momentum");
    m.temperature = c.get_double("train.temperature");
    m.learning_rate = c.get_double("train.lr");
    m.batch = static_cast<std::size_t>(c.get_int("train.batch"));
    m.epochs = static_cast<std::size_t>(c.get_int("train.epochs"));
    m.patience = static_cast<std::size_t>(c.get_int("train.patience"));
    m.view_drop = c.get_double("train.view_drop");
    m.seed = c.get_seed("train.seed");
    m.threads = ctx.threads;
    m.augment = augment_of(c.get("train.augment"));
    m.mode = encoder_mode_of(c.get("train.encoder_mode"));
    m.validate();
    return m;
}

enc::EncoderConfig encoder_config(const CliContext& ctx, std::size_t d_in) {
    const auto& c = ctx.config;
    enc::EncoderConfig e;
    e.d_in = static_cast<int>(d_in);
    e.d_h = static_cast<int>(c.get_int("encoder.d_h"));
    e.heads = static_cast<int>(c.get_int("encoder.heads"));
    e.patch_len = static_cast<int>(c.get_int("encoder.patch_len"));
    e.max_len = static_cast<int>(c.get_int("data.l_max"));
    e.ffn_mult = static_cast<int>(c.get_int("encoder.ffn_mult"));
    if (e.patch_len < 1) throw ConfigError("encoder.patch_len must be >= 1");
    if (e.d_h % e.heads != 0) throw ConfigError("encoder.d_h must be divisible by encoder.heads");
    return e;
}

std::vector<data::RawTrajectory> load_filtered(const CliContext& ctx) {
    return data::ingest_jsonl(ctx.out_dir + "/filtered.jsonl");
}

data::DatasetSplit load_split(const CliContext& ctx) {
    std::ifstream in(ctx.out_dir + "/split.json");
    if (!in) throw DataError("missing split.json: run `movsem preprocess` first");
    json j = json::parse(in);
    data::DatasetSplit s;
    s.train = j["train"].get<std::vector<std::string>>();
    s.validation = j["validation"].get<std::vector<std::string>>();
    s.test = j["test"].get<std::vector<std::string>>();
    s.finetune_train = j["finetune_train"].get<std::vector<std::string>>();
    s.finetune_validation = j["finetune_validation"].get<std::vector<std::string>>();
    s.finetune_test = j["finetune_test"].get<std::vector<std::string>>();
    return s;
}

std::vector<data::RawTrajectory> select_ids(const std::vector<data::RawTrajectory>& all,
                                            const std::vector<std::string>& ids) {
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < all.size(); ++i) index[all[i].id] = i;
    std::vector<data::RawTrajectory> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        auto it = index.find(id);
        if (it == index.end()) throw DataError("split references unknown trajectory id " + id);
        out.push_back(all[it->second]);
    }
    return out;
}

struct LoadedPipeline {
    pipe::FeaturePipeline pipeline;
    feat::CellEmbeddingTable table; // owns the storage pipeline.table points at
};

LoadedPipeline load_pipeline(const CliContext& ctx) {
    require_manifest(ctx, "train-cells");
    LoadedPipeline lp;
    lp.table = grid::load_embedding_table(ctx.out_dir + "/cells");
    lp.pipeline.region = config_region(ctx.config);
    lp.pipeline.gridspec =
        grid::GridSpec::make(lp.pipeline.region, ctx.config.get_double("grid.cell_size_m"));
    lp.pipeline.table = &lp.table;
    lp.pipeline.mode = feature_mode_of(ctx.config.get("train.feature_mode"));
    return lp;
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

void cmd_synth(const CliContext& ctx) {
    const auto& c = ctx.config;
    data::SyntheticConfig sc;
    sc.l_min = static_cast<std::size_t>(c.get_int("data.l_min"));
    sc.l_max = static_cast<std::size_t>(c.get_int("data.synthetic_l_max"));
    auto trajs = data::generate_synthetic(static_cast<std::size_t>(c.get_int("data.synthetic_n")),
                                          config_region(c), c.get_seed("data.synthetic_seed"), sc);
    data::save_jsonl(ctx.out_dir + "/dataset.jsonl", trajs);
    write_manifest(ctx, "synth",
                   {{"outputs", {"dataset.jsonl"}}, {"count", trajs.size()}});
    std::cout << "synth: wrote " << trajs.size() << " trajectories\n";
}

void cmd_preprocess(const CliContext& ctx) {
    const auto& c = ctx.config;
    geo::Region region = config_region(c);
    std::vector<data::RawTrajectory> raw;
    data::IngestStats stats;
    const std::string source = c.get("data.source");
    if (source == "synthetic") {
        require_manifest(ctx, "synth");
        raw = data::ingest_jsonl(ctx.out_dir + "/dataset.jsonl", &stats);
    } else if (source == "jsonl") {
        raw = data::ingest_jsonl(c.get("data.path"), &stats);
    } else if (source == "porto_csv") {
        raw = data::ingest_porto_csv(c.get("data.path"), region, &stats,
                                     c.get_double("data.sample_interval_s"));
    } else {
        throw ConfigError("data.source must be synthetic, jsonl, or porto_csv");
    }
    if (stats.skipped > 0) {
        std::cerr << "preprocess: skipped " << stats.skipped << " malformed rows\n";
    }
    auto filtered =
        data::filter_dataset(raw, region, static_cast<std::size_t>(c.get_int("data.l_min")),
                             static_cast<std::size_t>(c.get_int("data.l_max")));
    if (filtered.size() < 3) throw DataError("preprocess: fewer than 3 trajectories survive");
    data::DatasetSplit split = data::split_dataset(
        filtered, c.get_double("data.train_ratio"), c.get_double("data.val_ratio"),
        c.get_double("data.test_ratio"), c.get_seed("data.split_seed"));
    data::save_jsonl(ctx.out_dir + "/filtered.jsonl", filtered);
    json sj{{"train", split.train},
            {"validation", split.validation},
            {"test", split.test},
            {"finetune_train", split.finetune_train},
            {"finetune_validation", split.finetune_validation},
            {"finetune_test", split.finetune_test}};
    std::ofstream sout(ctx.out_dir + "/split.json");
    sout << sj.dump(2) << '\n';
    write_manifest(ctx, "preprocess",
                   {{"outputs", {"filtered.jsonl", "split.json"}},
                    {"ingested", raw.size()},
                    {"skipped", stats.skipped},
                    {"filtered", filtered.size()}});
    std::cout << "preprocess: " << filtered.size() << " trajectories (" << split.train.size()
              << "/" << split.validation.size() << "/" << split.test.size() << " split)\n";
}

void cmd_build_graph(const CliContext& ctx) {
    require_manifest(ctx, "preprocess");
    auto all = load_filtered(ctx);
    auto split = load_split(ctx);
    auto train = select_ids(all, split.train);
    geo::Region region = config_region(ctx.config);
    grid::GridSpec gridspec =
        grid::GridSpec::make(region, ctx.config.get_double("grid.cell_size_m"));
    std::vector<std::vector<std::int64_t>> cell_seqs(train.size());
    parallel_for(train.size(), ctx.threads, [&](std::size_t i) {
        cell_seqs[i] = grid::assign_cells(feat::normalize(train[i], region), gridspec);
    });
    grid::CellGraph graph = grid::build_graph(cell_seqs);
    graph.save_edge_list(ctx.out_dir + "/cellgraph.edges");
    write_manifest(ctx, "build-graph",
                   {{"outputs", {"cellgraph.edges"}},
                    {"nodes", graph.node_count()},
                    {"total_weight", graph.total_weight()}});
    std::cout << "build-graph: " << graph.node_count() << " cells, total transition weight "
              << graph.total_weight() << "\n";
}

void cmd_train_cells(const CliContext& ctx) {
    require_manifest(ctx, "build-graph");
    const auto& c = ctx.config;
    grid::CellGraph graph = grid::CellGraph::load_edge_list(ctx.out_dir + "/cellgraph.edges");
    grid::WalkConfig wc;
    wc.walks_per_node = static_cast<std::size_t>(c.get_int("cells.walks_per_node"));
    wc.walk_length = static_cast<std::size_t>(c.get_int("cells.walk_length"));
    wc.p = c.get_double("cells.p");
    wc.q = c.get_double("cells.q");
    auto walks = grid::node2vec_walks(graph, wc, c.get_seed("cells.seed"));
    grid::SkipgramConfig sc;
    sc.dimension = static_cast<std::size_t>(c.get_int("cells.d_se"));
    sc.window = static_cast<std::size_t>(c.get_int("cells.window"));
    sc.negatives = static_cast<std::size_t>(c.get_int("cells.negatives"));
    sc.epochs = static_cast<std::size_t>(c.get_int("cells.epochs"));
    sc.learning_rate = c.get_double("cells.lr");
    auto result = grid::train_skipgram(walks, sc, c.get_seed("cells.seed"));
    grid::save_embedding_table(ctx.out_dir + "/cells", result.table);
    write_manifest(ctx, "train-cells",
                   {{"outputs", {"cells.f32", "cells.manifest.json"}},
                    {"cells", result.table.vectors.size()},
                    {"d_se", sc.dimension},
                    {"epoch_loss", result.epoch_loss}});
    std::cout << "train-cells: " << result.table.vectors.size() << " cell embeddings of dim "
              << sc.dimension << "\n";
}

void cmd_pretrain(const CliContext& ctx) {
    require_manifest(ctx, "preprocess");
    LoadedPipeline lp = load_pipeline(ctx);
    auto all = load_filtered(ctx);
    auto split = load_split(ctx);
    auto train = select_ids(all, split.train);
    auto val = select_ids(all, split.validation);

    moco::MocoConfig mc = moco_config(ctx);
    enc::EncoderConfig ec = encoder_config(ctx, lp.pipeline.feature_dim());
    enc::EncoderNet<float> net(ec);
    net.init(mc.seed);
    moco::PretrainResult result = moco::pretrain(net, train, val, lp.pipeline, mc);

    io::save_checkpoint(ctx.out_dir + "/encoder.ckpt", net.to_archive());
    io::CsvWriter log(ctx.out_dir + "/pretrain_loss.csv", {"epoch", "step", "loss", "lr"});
    for (const auto& row : result.log) {
        log.row({static_cast<double>(row.epoch), static_cast<double>(row.step), row.loss, row.lr});
    }
    write_manifest(ctx, "pretrain",
                   {{"outputs", {"encoder.ckpt", "pretrain_loss.csv"}},
                    {"epochs_run", result.epochs_run},
                    {"best_epoch", result.best_epoch + 1},
                    {"best_val_loss", result.val_loss.empty()
                                          ? 0.0
                                          : result.val_loss[result.best_epoch]}});
    std::cout << "pretrain: " << result.epochs_run << " epochs, best validation loss "
              << (result.val_loss.empty() ? 0.0 : result.val_loss[result.best_epoch]) << "\n";
}

enc::EncoderNet<float> load_encoder(const CliContext& ctx, const LoadedPipeline& lp) {
    require_manifest(ctx, "pretrain");
    enc::EncoderConfig ec = encoder_config(ctx, lp.pipeline.feature_dim());
    enc::EncoderNet<float> net(ec);
    net.from_archive(io::load_checkpoint(ctx.out_dir + "/encoder.ckpt"));
    return net;
}

void cmd_evaluate(const CliContext& ctx, const std::string& protocol) {
    LoadedPipeline lp = load_pipeline(ctx);
    enc::EncoderNet<float> net = load_encoder(ctx, lp);
    auto all = load_filtered(ctx);
    auto split = load_split(ctx);
    auto test = select_ids(all, split.test);
    const auto& c = ctx.config;
    enc::EncoderMode mode = encoder_mode_of(c.get("train.encoder_mode"));

    eval::RetrievalBench bench = eval::build_retrieval_bench(
        test, static_cast<std::size_t>(c.get_int("eval.queries")),
        static_cast<std::size_t>(c.get_int("eval.database")), c.get_seed("eval.seed"));

    if (protocol == "rank") {
        double rank = eval::bench_mean_rank(net, lp.pipeline, bench, mode, ctx.threads);
        io::CsvWriter out(ctx.out_dir + "/eval_rank.csv", {"queries", "database", "mean_rank"});
        out.row({static_cast<double>(bench.queries.size()),
                 static_cast<double>(bench.database.size()), rank});
        write_manifest(ctx, "evaluate", {{"protocol", protocol}, {"mean_rank", rank}});
        std::cout << "evaluate rank: mean rank " << rank << "\n";
        return;
    }
    eval::Perturbation kind;
    if (protocol == "downsample") {
        kind = eval::Perturbation::kDownsample;
    } else if (protocol == "distort") {
        kind = eval::Perturbation::kDistort;
    } else {
        throw ConfigError("evaluate: unknown protocol " + protocol);
    }
    auto rows = eval::robustness_sweep(net, lp.pipeline, bench, kind, c.get_list("eval.rates"),
                                       c.get_double("eval.distort_delta_m"),
                                       c.get_seed("eval.seed"), mode, ctx.threads);
    io::CsvWriter out(ctx.out_dir + "/eval_" + protocol + ".csv", {"rate", "mean_rank"});
    for (const auto& row : rows) out.row({row.rate, row.rank});
    write_manifest(ctx, "evaluate", {{"protocol", protocol}, {"rows", rows.size()}});
    std::cout << "evaluate " << protocol << ": " << rows.size() << " rates\n";
}

void cmd_finetune(const CliContext& ctx) {
    LoadedPipeline lp = load_pipeline(ctx);
    enc::EncoderNet<float> net = load_encoder(ctx, lp);
    auto all = load_filtered(ctx);
    auto split = load_split(ctx);
    const auto& c = ctx.config;

    // pool = finetune partitions in a stable order
    std::vector<std::string> pool_ids = split.finetune_train;
    std::size_t n_train = pool_ids.size();
    pool_ids.insert(pool_ids.end(), split.finetune_validation.begin(),
                    split.finetune_validation.end());
    std::size_t n_val = split.finetune_validation.size();
    pool_ids.insert(pool_ids.end(), split.finetune_test.begin(), split.finetune_test.end());
    auto pool = select_ids(all, pool_ids);

    dist::Measure measure = dist::measure_from_name(c.get("finetune.measure"));
    dist::MeasureParams mp;
    mp.edr_eps_m = c.get_double("finetune.edr_eps_m");
    std::vector<dist::PointSeq> seqs(pool.size());
    parallel_for(pool.size(), ctx.threads,
                 [&](std::size_t i) { seqs[i] = dist::to_meters(pool[i]); });
    std::vector<double> gt = dist::pairwise_matrix(seqs, measure, mp, ctx.threads);
    {
        io::FloatBlock block;
        block.dimension = pool.size();
        for (const auto& t : pool) block.ids.push_back(t.id);
        block.values.assign(gt.begin(), gt.end());
        io::save_float_block(ctx.out_dir + "/gt_" + dist::measure_name(measure), block);
    }

    std::vector<std::size_t> train_idx(n_train), test_idx;
    std::iota(train_idx.begin(), train_idx.end(), 0);
    for (std::size_t i = n_train + n_val; i < pool.size(); ++i) test_idx.push_back(i);

    eval::FinetuneConfig fc;
    fc.epochs = static_cast<std::size_t>(c.get_int("finetune.epochs"));
    fc.head_lr = c.get_double("finetune.head_lr");
    fc.encoder_lr_scale = c.get_double("finetune.encoder_lr_scale");
    fc.d_out = static_cast<int>(c.get_int("finetune.d_out"));
    fc.seed = c.get_seed("finetune.seed");
    fc.threads = ctx.threads;
    fc.mode = encoder_mode_of(c.get("train.encoder_mode"));
    eval::ApproxHead head(net.config().d_h, fc.d_out);
    head.init(fc.seed);
    eval::FinetuneMetrics metrics =
        eval::finetune_approx(net, head, lp.pipeline, pool, gt, train_idx, test_idx, fc);

    io::CsvWriter out(ctx.out_dir + "/finetune_metrics.csv",
                      {"measure", "hr5", "hr20", "r5_20", "train_mse"});
    out.row({dist::measure_name(measure), io::format_double(metrics.hr5),
             io::format_double(metrics.hr20), io::format_double(metrics.r5_20),
             io::format_double(metrics.final_train_mse)});
    write_manifest(ctx, "finetune",
                   {{"measure", dist::measure_name(measure)},
                    {"hr5", metrics.hr5},
                    {"hr20", metrics.hr20},
                    {"r5_20", metrics.r5_20}});
    std::cout << "finetune " << dist::measure_name(measure) << ": HR@5 " << metrics.hr5
              << ", HR@20 " << metrics.hr20 << ", R5@20 " << metrics.r5_20 << "\n";
}

void cmd_bench(const CliContext& ctx) {
    LoadedPipeline lp = load_pipeline(ctx);
    const auto& c = ctx.config;
    enc::EncoderConfig ec = encoder_config(ctx, lp.pipeline.feature_dim());
    enc::EncoderNet<float> net(ec);
    if (fs::exists(manifest_path(ctx, "pretrain"))) {
        net.from_archive(io::load_checkpoint(ctx.out_dir + "/encoder.ckpt"));
    } else {
        net.init(c.get_seed("bench.seed"));
    }
    eval::EfficiencyConfig bc;
    bc.batch = static_cast<std::size_t>(c.get_int("bench.batch"));
    bc.batches = static_cast<std::size_t>(c.get_int("bench.batches"));
    bc.warmup = static_cast<std::size_t>(c.get_int("bench.warmup"));
    bc.traj_len = static_cast<std::size_t>(c.get_int("bench.traj_len"));
    bc.scaling_workloads.clear();
    for (double w : c.get_list("bench.workloads")) {
        bc.scaling_workloads.push_back(static_cast<std::size_t>(w));
    }
    bc.seed = c.get_seed("bench.seed");
    bc.threads = ctx.threads;

    // fixed-length synthetic workload
    data::SyntheticConfig sc;
    sc.l_min = sc.l_max = bc.traj_len;
    auto workload = data::generate_synthetic(bc.batch, config_region(c), bc.seed, sc);
    eval::EfficiencyReport report = eval::bench_efficiency(net, lp.pipeline, workload, bc);

    io::CsvWriter out(ctx.out_dir + "/bench.csv",
                      {"mode", "flops", "latency_ms", "throughput_sps"});
    out.row({std::string("hierarchical"), std::to_string(report.flops_hier),
             io::format_double(report.latency_ms_hier),
             io::format_double(report.throughput_hier)});
    out.row({std::string("flat"), std::to_string(report.flops_flat),
             io::format_double(report.latency_ms_flat), io::format_double(report.throughput_flat)});
    io::CsvWriter scale(ctx.out_dir + "/bench_scaling.csv", {"workload", "seconds"});
    for (const auto& [workload_n, seconds] : report.scaling) {
        scale.row({static_cast<double>(workload_n), seconds});
    }
    write_manifest(ctx, "bench",
                   {{"flops_hier", report.flops_hier},
                    {"flops_flat", report.flops_flat},
                    {"throughput_hier", report.throughput_hier},
                    {"throughput_flat", report.throughput_flat}});
    std::cout << "bench: hier " << report.flops_hier << " MACs, " << report.throughput_hier
              << " samples/s; flat " << report.flops_flat << " MACs, " << report.throughput_flat
              << " samples/s\n";
}

void cmd_ablate(const CliContext& ctx) {
    LoadedPipeline lp = load_pipeline(ctx);
    auto all = load_filtered(ctx);
    auto split = load_split(ctx);
    auto train = select_ids(all, split.train);
    auto val = select_ids(all, split.validation);
    auto test = select_ids(all, split.test);
    const auto& c = ctx.config;

    std::vector<std::uint64_t> seeds;
    for (double s : c.get_list("ablate.seeds")) seeds.push_back(static_cast<std::uint64_t>(s));
    std::vector<eval::AblationVariant> variants = {
        eval::AblationVariant::kFull, eval::AblationVariant::kNoMse,
        eval::AblationVariant::kNoHse, eval::AblationVariant::kNoCga};

    auto rows = eval::ablate(train, val, test, lp.pipeline,
                             encoder_config(ctx, lp.pipeline.feature_dim()), moco_config(ctx),
                             static_cast<std::size_t>(c.get_int("eval.queries")),
                             static_cast<std::size_t>(c.get_int("eval.database")), variants,
                             seeds);
    io::CsvWriter out(ctx.out_dir + "/ablate.csv", {"variant", "seed", "mean_rank"});
    for (const auto& row : rows) {
        out.row({eval::ablation_name(row.variant), std::to_string(row.seed),
                 io::format_double(row.rank)});
    }
    write_manifest(ctx, "ablate", {{"rows", rows.size()}});
    std::cout << "ablate: " << rows.size() << " rows\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"trajectory similarity pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    if (const char* env = std::getenv("MOVSEM_CONFIG")) config_path = env;
    std::vector<std::string> overrides;
    bool deterministic_flag = false;
    app.add_option("--config", config_path, "configuration file (or MOVSEM_CONFIG)");
    app.add_option("--set", overrides, "override a key: section.key=value")->take_all();
    app.add_flag("--deterministic", deterministic_flag, "force single-threaded numeric paths");

    std::string protocol = "rank";
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    auto* preprocess = app.add_subcommand("preprocess", "ingest, filter, split");
    auto* build_graph = app.add_subcommand("build-graph", "build the cell transition graph");
    auto* train_cells = app.add_subcommand("train-cells", "train structural cell embeddings");
    auto* pretrain = app.add_subcommand("pretrain", "contrastive encoder pretraining");
    auto* evaluate = app.add_subcommand("evaluate", "retrieval / robustness protocols");
    evaluate->add_option("--protocol", protocol, "rank | downsample | distort");
    auto* finetune = app.add_subcommand("finetune", "heuristic-measure approximation");
    auto* bench = app.add_subcommand("bench", "efficiency benchmark");
    auto* ablate = app.add_subcommand("ablate", "component ablation sweep");

    CLI11_PARSE(app, argc, argv);

    try {
        CliContext ctx;
        if (!config_path.empty()) ctx.config.load_file(config_path);
        for (const auto& kv : overrides) ctx.config.set_assignment(kv);
        ctx.out_dir = ctx.config.get("run.output_dir");
        ctx.threads = static_cast<unsigned>(ctx.config.get_int("run.threads"));
        if (deterministic_flag || ctx.config.get_bool("run.deterministic")) ctx.threads = 1;
        fs::create_directories(ctx.out_dir);

        if (synth->parsed()) cmd_synth(ctx);
        if (preprocess->parsed()) cmd_preprocess(ctx);
        if (build_graph->parsed()) cmd_build_graph(ctx);
        if (train_cells->parsed()) cmd_train_cells(ctx);
        if (pretrain->parsed()) cmd_pretrain(ctx);
        if (evaluate->parsed()) cmd_evaluate(ctx, protocol);
        if (finetune->parsed()) cmd_finetune(ctx);
        if (bench->parsed()) cmd_bench(ctx);
        if (ablate->parsed()) cmd_ablate(ctx);
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
