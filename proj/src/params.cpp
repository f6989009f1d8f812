#include "rng/params.hpp"

#include <stdexcept>

namespace rng {

Param& ParamStore::add(const std::string& name, Matrix init) {
  auto [it, inserted] = params_.try_emplace(name);
  if (!inserted) throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
  it->second.grad = Matrix(init.rows(), init.cols());
  it->second.value = std::move(init);
  return it->second;
}

Param& ParamStore::add_gaussian(const std::string& name, std::size_t rows, std::size_t cols,
                                double std, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = std * rng.normal();
  return add(name, std::move(m));
}

Param& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("ParamStore: no parameter '" + name + "'");
  return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("ParamStore: no parameter '" + name + "'");
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) p.grad.fill(0.0);
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += p.value.size();
  return n;
}

}  // namespace rng
