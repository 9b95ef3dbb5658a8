#pragma once

namespace lpnet {

// Closed interval on the time axis; normalized intervals live in [0, 1].
struct Interval {
  double start = 0.0;
  double end = 0.0;

  double length() const { return end - start; }
  bool operator==(const Interval&) const = default;
};

double intersection(const Interval& a, const Interval& b);
double union_length(const Interval& a, const Interval& b);
// Length of the smallest interval covering both.
double hull_length(const Interval& a, const Interval& b);

// |a & b| / |a | b|, 0 when the union has zero length.
double tiou(const Interval& a, const Interval& b);
// tiou - (hull - union) / hull, 0 when the hull has zero length.
double giou(const Interval& a, const Interval& b);

}  // namespace lpnet
