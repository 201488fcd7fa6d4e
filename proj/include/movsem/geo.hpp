#ifndef MOVSEM_GEO_HPP
#define MOVSEM_GEO_HPP

#include "movsem/common.hpp"

namespace movsem::geo {

// Spherical (Web) Mercator, Earth radius in meters.
inline constexpr double kEarthRadiusM = 6378137.0;
// Latitudes beyond this are not representable in Web Mercator.
inline constexpr double kMaxLatitude = 85.05113;
inline constexpr double kPi = 3.14159265358979323846;

struct MeterPoint {
    double x = 0.0;
    double y = 0.0;
};

/// Project WGS84 (lon, lat) degrees to spherical Mercator meters.
inline MeterPoint mercator(double lon_deg, double lat_deg) {
    if (!(std::abs(lat_deg) < kMaxLatitude)) {
        std::ostringstream os;
        os << "mercator: latitude " << lat_deg << " outside validity bound +-" << kMaxLatitude;
        throw DataError(os.str());
    }
    double x = kEarthRadiusM * lon_deg * kPi / 180.0;
    double y = kEarthRadiusM * std::log(std::tan(kPi / 4.0 + lat_deg * kPi / 360.0));
    return {x, y};
}

/// Inverse of mercator(); meters back to (lon, lat) degrees.
inline void mercator_inverse(double mx, double my, double& lon_deg, double& lat_deg) {
    lon_deg = mx / kEarthRadiusM * 180.0 / kPi;
    lat_deg = (2.0 * std::atan(std::exp(my / kEarthRadiusM)) - kPi / 2.0) * 180.0 / kPi;
}

// Geographic region of interest plus its projected bounding box.
struct Region {
    double lon_min = 0.0, lon_max = 0.0;
    double lat_min = 0.0, lat_max = 0.0;
    // projected bounds (meters)
    double x_min_m = 0.0, y_min_m = 0.0;
    double width_m = 0.0, height_m = 0.0;

    static Region from_lonlat(double lon_min, double lon_max, double lat_min, double lat_max) {
        if (!(lon_min < lon_max) || !(lat_min < lat_max)) {
            throw ConfigError("region: requires lon_min < lon_max and lat_min < lat_max");
        }
        Region r;
        r.lon_min = lon_min;
        r.lon_max = lon_max;
        r.lat_min = lat_min;
        r.lat_max = lat_max;
        MeterPoint sw = mercator(lon_min, lat_min);
        MeterPoint ne = mercator(lon_max, lat_max);
        r.x_min_m = sw.x;
        r.y_min_m = sw.y;
        r.width_m = ne.x - sw.x;
        r.height_m = ne.y - sw.y;
        if (!(r.width_m > 0.0) || !(r.height_m > 0.0)) {
            throw ConfigError("region: degenerate projected extent");
        }
        return r;
    }

    bool contains(double lon, double lat) const {
        return lon >= lon_min && lon <= lon_max && lat >= lat_min && lat <= lat_max;
    }
};

} // namespace movsem::geo

#endif // MOVSEM_GEO_HPP
