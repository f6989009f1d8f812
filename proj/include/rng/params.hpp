#pragma once

#include <map>
#include <string>

#include "rng/matrix.hpp"
#include "rng/random.hpp"

namespace rng {

struct Param {
  Matrix value;
  Matrix grad;
};

/// Named parameters with gradient slots. Iteration order is the sorted
/// name order, which keeps optimizer updates and checkpoints stable.
class ParamStore {
 public:
  using Map = std::map<std::string, Param>;

  /// Registers a new parameter; throws if the name is taken.
  Param& add(const std::string& name, Matrix init);
  /// Registers a parameter initialized N(0, std²) from `rng`.
  Param& add_gaussian(const std::string& name, std::size_t rows, std::size_t cols, double std,
                      Rng& rng);

  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  void zero_grad();
  std::size_t total_size() const;
  std::size_t count() const { return params_.size(); }

  Map::iterator begin() { return params_.begin(); }
  Map::iterator end() { return params_.end(); }
  Map::const_iterator begin() const { return params_.begin(); }
  Map::const_iterator end() const { return params_.end(); }

 private:
  Map params_;
};

}  // namespace rng
