#pragma once

// Clear-sky irradiance features: solar geometry from the NOAA closed-form
// ephemeris (Meeus-style low-precision series, no refraction) and global /
// direct clear-sky irradiance from the published Ineichen-Perez model with
// altitude-corrected coefficients and Kasten-Young airmass.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "pvgnn/errors.hpp"
#include "pvgnn/graph.hpp"
#include "pvgnn/timeutil.hpp"

namespace pvgnn {

struct SolarPosition {
  double zenith_deg = 0.0;       // [0, 180]
  double azimuth_deg = 0.0;      // [0, 360), clockwise from north
  double extraterrestrial_w_m2 = 0.0;
};

struct ClearSkySample {
  double ghi = 0.0;
  double dni = 0.0;
};

inline double extraterrestrial_irradiance(int day_of_year) {
  return 1367.0 * (1.0 + 0.033 * std::cos(2.0 * std::numbers::pi * day_of_year / 365.0));
}

inline SolarPosition solar_position(int64_t ts_utc, const NodeLocation& site) {
  constexpr double rad = std::numbers::pi / 180.0;
  double jd = static_cast<double>(ts_utc) / 86400.0 + 2440587.5;
  double T = (jd - 2451545.0) / 36525.0;

  double L0 = std::fmod(280.46646 + T * (36000.76983 + 0.0003032 * T), 360.0);
  if (L0 < 0) L0 += 360.0;
  double M = 357.52911 + T * (35999.05029 - 0.0001537 * T);
  double e = 0.016708634 - T * (0.000042037 + 0.0000001267 * T);
  double C = std::sin(M * rad) * (1.914602 - T * (0.004817 + 0.000014 * T)) +
             std::sin(2 * M * rad) * (0.019993 - 0.000101 * T) +
             std::sin(3 * M * rad) * 0.000289;
  double true_long = L0 + C;
  double omega = 125.04 - 1934.136 * T;
  double app_long = true_long - 0.00569 - 0.00478 * std::sin(omega * rad);
  double eps0 = 23.0 + (26.0 + 21.448 / 60.0) / 60.0 -
                (46.815 * T + 0.00059 * T * T - 0.001813 * T * T * T) / 3600.0;
  double eps = eps0 + 0.00256 * std::cos(omega * rad);
  double decl = std::asin(std::sin(eps * rad) * std::sin(app_long * rad));

  double y = std::tan(eps * rad / 2.0);
  y *= y;
  double eot_min =
      4.0 / rad *
      (y * std::sin(2 * L0 * rad) - 2.0 * e * std::sin(M * rad) +
       4.0 * e * y * std::sin(M * rad) * std::cos(2 * L0 * rad) -
       0.5 * y * y * std::sin(4 * L0 * rad) - 1.25 * e * e * std::sin(2 * M * rad));

  double minutes = static_cast<double>(seconds_of_day(ts_utc)) / 60.0;
  double tst = std::fmod(minutes + eot_min + 4.0 * site.longitude_deg, 1440.0);
  if (tst < 0) tst += 1440.0;
  double ha = tst / 4.0 - 180.0;  // degrees, negative before solar noon

  double phi = site.latitude_deg * rad;
  double har = ha * rad;
  double cosz = std::sin(phi) * std::sin(decl) + std::cos(phi) * std::cos(decl) * std::cos(har);
  cosz = std::clamp(cosz, -1.0, 1.0);

  SolarPosition pos;
  pos.zenith_deg = std::acos(cosz) / rad;
  double az = std::atan2(-std::sin(har) * std::cos(decl),
                         std::sin(decl) * std::cos(phi) -
                             std::cos(decl) * std::sin(phi) * std::cos(har)) /
              rad;
  if (az < 0) az += 360.0;
  if (az >= 360.0) az -= 360.0;
  pos.azimuth_deg = az;
  pos.extraterrestrial_w_m2 = extraterrestrial_irradiance(day_of_year(ts_utc));
  return pos;
}

// Relative optical airmass (Kasten and Young 1989); valid below the horizon
// limit of the formula but only used for zenith < 90.
inline double kasten_young_airmass(double zenith_deg) {
  return 1.0 / (std::cos(zenith_deg * std::numbers::pi / 180.0) +
                0.50572 * std::pow(96.07995 - zenith_deg, -1.6364));
}

inline ClearSkySample clearsky_ineichen(const SolarPosition& pos, const NodeLocation& site,
                                        double linke_turbidity) {
  check_arg(linke_turbidity >= 1.0 && linke_turbidity <= 10.0,
            "linke turbidity must lie in [1, 10]");
  if (pos.zenith_deg >= 90.0) return {0.0, 0.0};
  double alt = site.altitude_m;
  double cosz = std::cos(pos.zenith_deg * std::numbers::pi / 180.0);
  double i0 = pos.extraterrestrial_w_m2;
  double pressure_ratio = std::pow(1.0 - 2.25577e-5 * alt, 5.25588);
  double am = kasten_young_airmass(pos.zenith_deg) * pressure_ratio;
  double fh1 = std::exp(-alt / 8000.0);
  double fh2 = std::exp(-alt / 1250.0);
  double cg1 = 5.09e-5 * alt + 0.868;
  double cg2 = 3.92e-5 * alt + 0.0387;
  double tl = linke_turbidity;

  ClearSkySample out;
  out.ghi = std::max(cg1 * i0 * cosz * std::exp(-cg2 * am * (fh1 + fh2 * (tl - 1.0))), 0.0);
  double b = 0.664 + 0.163 / fh1;
  double bnci = i0 * std::max(b * std::exp(-0.09 * am * (tl - 1.0)), 0.0);
  double bnci2 =
      out.ghi * std::max((1.0 - (0.1 - 0.2 * std::exp(-tl)) / (0.1 + 0.882 / fh1)) / cosz, 0.0);
  out.dni = std::max(std::min(bnci, bnci2), 0.0);
  return out;
}

inline ClearSkySample clearsky_at(int64_t ts_utc, const NodeLocation& site,
                                  double linke_turbidity = 3.0) {
  return clearsky_ineichen(solar_position(ts_utc, site), site, linke_turbidity);
}

}  // namespace pvgnn
