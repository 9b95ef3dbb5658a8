#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lpnet/nd/tensor.hpp"

namespace lpnet {

using Rng = std::mt19937_64;

// Standard normal draw built on the engine's raw bits (Box-Muller), so
// sequences are identical across standard library implementations.
double standard_normal(Rng& rng);

// Named, ordered collection of trainable leaves. Order of registration is the
// order used by the optimizer and the checkpoint layout.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    nd::Tensor tensor;
  };

  nd::Tensor add(const std::string& name, nd::Shape shape, std::vector<double> values);
  nd::Tensor zeros(const std::string& name, nd::Shape shape);
  nd::Tensor constant(const std::string& name, nd::Shape shape, double value);
  nd::Tensor normal(const std::string& name, nd::Shape shape, double stddev, Rng& rng);
  nd::Tensor uniform(const std::string& name, nd::Shape shape, double limit, Rng& rng);

  const std::vector<Entry>& entries() const { return entries_; }
  const Entry* find(const std::string& name) const;
  std::size_t scalar_count() const;

  void zero_grad();
  void clear_grad();

  using Snapshot = std::vector<std::vector<double>>;
  Snapshot snapshot() const;
  void restore(const Snapshot& snapshot);

 private:
  std::vector<Entry> entries_;
};

}  // namespace lpnet
