#include "lpnet/intervals.hpp"

#include <algorithm>

namespace lpnet {

double intersection(const Interval& a, const Interval& b) {
  return std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
}

double union_length(const Interval& a, const Interval& b) {
  return a.length() + b.length() - intersection(a, b);
}

double hull_length(const Interval& a, const Interval& b) {
  return std::max(a.end, b.end) - std::min(a.start, b.start);
}

double tiou(const Interval& a, const Interval& b) {
  const double u = union_length(a, b);
  if (u <= 0.0) return 0.0;
  return intersection(a, b) / u;
}

double giou(const Interval& a, const Interval& b) {
  const double hull = hull_length(a, b);
  if (hull <= 0.0) return 0.0;
  return tiou(a, b) - (hull - union_length(a, b)) / hull;
}

}  // namespace lpnet
