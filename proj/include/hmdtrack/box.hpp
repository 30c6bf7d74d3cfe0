#pragma once

#include <algorithm>

namespace hmdtrack {

// Axis-aligned box in normalized image coordinates (center + extent).
struct Box2D {
  double cx{0.0};
  double cy{0.0};
  double w{0.0};
  double h{0.0};

  static Box2D from_corners(double xmin, double ymin, double xmax, double ymax) {
    return {0.5 * (xmin + xmax), 0.5 * (ymin + ymax), xmax - xmin, ymax - ymin};
  }

  double xmin() const { return cx - 0.5 * w; }
  double xmax() const { return cx + 0.5 * w; }
  double ymin() const { return cy - 0.5 * h; }
  double ymax() const { return cy + 0.5 * h; }
  double area() const { return std::max(0.0, w) * std::max(0.0, h); }
};

inline double iou(const Box2D& a, const Box2D& b) {
  const double iw = std::min(a.xmax(), b.xmax()) - std::max(a.xmin(), b.xmin());
  const double ih = std::min(a.ymax(), b.ymax()) - std::max(a.ymin(), b.ymin());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

}  // namespace hmdtrack
