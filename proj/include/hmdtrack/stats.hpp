#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "hmdtrack/camera.hpp"
#include "hmdtrack/error.hpp"
#include "hmdtrack/geometry.hpp"
#include "hmdtrack/labelgen.hpp"

// Dataset statistics: pixel occupancy heatmap and per-quantity histograms.
namespace hmdtrack {

struct Histogram {
  std::string name;
  std::string unit;
  std::vector<double> edges;  // size counts.size() + 1
  std::vector<std::size_t> counts;

  std::size_t total() const {
    std::size_t n = 0;
    for (auto c : counts) n += c;
    return n;
  }
};

// Equal-width bins over [min, max], last bin closed. A constant input gives a
// single bin.
inline Histogram make_histogram(std::string name, std::string unit, const std::vector<double>& values,
                                std::size_t bins = 20) {
  if (values.empty()) throw Error("no values to histogram");
  if (bins == 0) throw Error("bin count must be positive");
  Histogram h{std::move(name), std::move(unit), {}, {}};
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) {
    h.edges = {lo, hi};
    h.counts = {values.size()};
    return h;
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t i = 0; i <= bins; ++i) h.edges.push_back(lo + width * static_cast<double>(i));
  h.edges.back() = hi;
  h.counts.assign(bins, 0);
  for (double v : values) {
    auto i = static_cast<std::size_t>((v - lo) / width);
    ++h.counts[std::min(i, bins - 1)];
  }
  return h;
}

// Number of left-image boxes covering each cell center.
struct OccupancyGrid {
  std::size_t cols{0}, rows{0};
  std::vector<std::size_t> counts;  // row-major

  std::size_t at(std::size_t r, std::size_t c) const { return counts[r * cols + c]; }
};

inline OccupancyGrid occupancy_grid(const std::vector<LabelRow>& rows, std::size_t cols = 64,
                                    std::size_t nrows = 48) {
  OccupancyGrid g{cols, nrows, std::vector<std::size_t>(cols * nrows, 0)};
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < nrows; ++i) {
      const double y = (static_cast<double>(i) + 0.5) / static_cast<double>(nrows);
      if (y < r.box_l.ymin() || y > r.box_l.ymax()) continue;
      for (std::size_t j = 0; j < cols; ++j) {
        const double x = (static_cast<double>(j) + 0.5) / static_cast<double>(cols);
        if (x >= r.box_l.xmin() && x <= r.box_l.xmax()) ++g.counts[i * cols + j];
      }
    }
  }
  return g;
}

struct DatasetStats {
  OccupancyGrid occupancy;
  std::vector<Histogram> histograms;  // box_w, box_h, x, y, z, roll, pitch, yaw
};

inline DatasetStats dataset_stats(const std::vector<LabelRow>& rows, const StereoRig& rig,
                                  std::size_t bins = 20) {
  if (rows.empty()) throw Error("empty label file");
  std::vector<double> bw, bh, x, y, z, roll, pitch, yaw;
  for (const auto& r : rows) {
    bw.push_back(r.box_l.w);
    bh.push_back(r.box_l.h);
    const Vec3 p = keypoint_to_point(rig.left, r.kp_l);
    x.push_back(p.x());
    y.push_back(p.y());
    z.push_back(p.z());
    const EulerAngles e = EulerAngles::from_quaternion(r.q);
    roll.push_back(rad2deg(e.roll));
    pitch.push_back(rad2deg(e.pitch));
    yaw.push_back(rad2deg(e.yaw));
  }
  DatasetStats s;
  s.occupancy = occupancy_grid(rows);
  s.histograms = {make_histogram("box_w", "normalized", bw, bins),
                  make_histogram("box_h", "normalized", bh, bins),
                  make_histogram("x", "m", x, bins),
                  make_histogram("y", "m", y, bins),
                  make_histogram("z", "m", z, bins),
                  make_histogram("roll", "deg", roll, bins),
                  make_histogram("pitch", "deg", pitch, bins),
                  make_histogram("yaw", "deg", yaw, bins)};
  return s;
}

inline std::string histogram_csv(const Histogram& h) {
  std::ostringstream ss;
  ss.precision(12);
  ss << "bin_lo_" << h.unit << ",bin_hi_" << h.unit << ",count\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    ss << h.edges[i] << ',' << h.edges[i + 1] << ',' << h.counts[i] << '\n';
  }
  return ss.str();
}

inline std::string occupancy_csv(const OccupancyGrid& g) {
  std::ostringstream ss;
  for (std::size_t r = 0; r < g.rows; ++r) {
    for (std::size_t c = 0; c < g.cols; ++c) ss << (c ? "," : "") << g.at(r, c);
    ss << '\n';
  }
  return ss.str();
}

inline std::string histogram_svg(const Histogram& h) {
  constexpr double W = 480, H = 240, pad = 30;
  const std::size_t peak = std::max<std::size_t>(1, *std::max_element(h.counts.begin(), h.counts.end()));
  const double bw = (W - 2 * pad) / static_cast<double>(h.counts.size());
  std::ostringstream ss;
  ss.precision(6);
  ss << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  ss << "<text x=\"" << pad << "\" y=\"18\" font-size=\"12\">" << h.name << " [" << h.unit << "]</text>\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    const double bh = (H - 2 * pad) * static_cast<double>(h.counts[i]) / static_cast<double>(peak);
    ss << "<rect x=\"" << pad + bw * static_cast<double>(i) << "\" y=\"" << H - pad - bh << "\" width=\""
       << bw * 0.9 << "\" height=\"" << bh << "\" fill=\"steelblue\"/>\n";
  }
  ss << "<text x=\"" << pad << "\" y=\"" << H - 10 << "\" font-size=\"10\">" << h.edges.front() << "</text>\n";
  ss << "<text x=\"" << W - pad << "\" y=\"" << H - 10 << "\" font-size=\"10\" text-anchor=\"end\">"
     << h.edges.back() << "</text>\n";
  ss << "</svg>\n";
  return ss.str();
}

inline std::string occupancy_svg(const OccupancyGrid& g) {
  constexpr double cell = 8;
  const std::size_t peak = std::max<std::size_t>(1, *std::max_element(g.counts.begin(), g.counts.end()));
  std::ostringstream ss;
  ss << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << cell * static_cast<double>(g.cols)
     << "\" height=\"" << cell * static_cast<double>(g.rows) << "\">\n";
  for (std::size_t r = 0; r < g.rows; ++r) {
    for (std::size_t c = 0; c < g.cols; ++c) {
      const int level = static_cast<int>(std::lround(255.0 * static_cast<double>(g.at(r, c)) /
                                                     static_cast<double>(peak)));
      ss << "<rect x=\"" << cell * static_cast<double>(c) << "\" y=\"" << cell * static_cast<double>(r)
         << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"rgb(" << level << ",0,"
         << 255 - level << ")\"/>\n";
    }
  }
  ss << "</svg>\n";
  return ss.str();
}

}  // namespace hmdtrack
