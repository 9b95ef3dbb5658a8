#include "lpnet/params.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "lpnet/nd/ops.hpp"

namespace lpnet {

double standard_normal(Rng& rng) {
  double u1 = nd::uniform01(rng);
  while (u1 <= 0.0) u1 = nd::uniform01(rng);
  const double u2 = nd::uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

nd::Tensor ParamSet::add(const std::string& name, nd::Shape shape, std::vector<double> values) {
  if (find(name) != nullptr) throw std::invalid_argument("duplicate parameter name: " + name);
  nd::Tensor t = nd::Tensor::parameter(std::move(shape), std::move(values));
  entries_.push_back({name, t});
  return t;
}

nd::Tensor ParamSet::zeros(const std::string& name, nd::Shape shape) {
  return constant(name, std::move(shape), 0.0);
}

nd::Tensor ParamSet::constant(const std::string& name, nd::Shape shape, double value) {
  auto n = nd::numel(shape);
  return add(name, std::move(shape), std::vector<double>(n, value));
}

nd::Tensor ParamSet::normal(const std::string& name, nd::Shape shape, double stddev, Rng& rng) {
  std::vector<double> values(nd::numel(shape));
  for (auto& v : values) v = stddev * standard_normal(rng);
  return add(name, std::move(shape), std::move(values));
}

nd::Tensor ParamSet::uniform(const std::string& name, nd::Shape shape, double limit, Rng& rng) {
  std::vector<double> values(nd::numel(shape));
  for (auto& v : values) v = limit * (2.0 * nd::uniform01(rng) - 1.0);
  return add(name, std::move(shape), std::move(values));
}

const ParamSet::Entry* ParamSet::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

void ParamSet::clear_grad() {
  for (auto& e : entries_) e.tensor.clear_grad();
}

ParamSet::Snapshot ParamSet::snapshot() const {
  Snapshot s;
  s.reserve(entries_.size());
  for (const auto& e : entries_) s.emplace_back(e.tensor.data().begin(), e.tensor.data().end());
  return s;
}

void ParamSet::restore(const Snapshot& snapshot) {
  if (snapshot.size() != entries_.size()) throw std::invalid_argument("snapshot does not match parameter set");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto dst = entries_[i].tensor.mutable_data();
    if (snapshot[i].size() != dst.size()) {
      throw std::invalid_argument("snapshot size mismatch for " + entries_[i].name);
    }
    std::copy(snapshot[i].begin(), snapshot[i].end(), dst.begin());
  }
}

}  // namespace lpnet
