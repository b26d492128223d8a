#pragma once

#include <Eigen/Dense>

#include <string>
#include <unordered_map>

namespace mcoref {

// Pretrained word-vector table, loaded from a plain-text file with one
// "token v1 ... v_dw" entry per line. Lookups are case-insensitive;
// out-of-vocabulary tokens map to the zero vector.
class EmbeddingProvider {
public:
  explicit EmbeddingProvider(int dim) : dim_(dim) {}

  static EmbeddingProvider load(const std::string& path);
  void save(const std::string& path) const;

  void insert(const std::string& token, Eigen::VectorXd vec);
  Eigen::VectorXd lookup(const std::string& token) const;
  bool contains(const std::string& token) const;

  int dim() const { return dim_; }
  size_t size() const { return table_.size(); }

private:
  int dim_;
  std::unordered_map<std::string, Eigen::VectorXd> table_;
};

std::string to_lower(const std::string& s);

}  // namespace mcoref
