#include "mcoref/embeddings.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace mcoref {

std::string to_lower(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

EmbeddingProvider EmbeddingProvider::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embedding file: " + path);
  std::string line;
  int dim = -1;
  size_t line_no = 0;
  EmbeddingProvider provider(0);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string token;
    ss >> token;
    std::vector<double> vals;
    double v;
    while (ss >> v) vals.push_back(v);
    if (vals.empty())
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": no vector values");
    if (dim < 0) {
      dim = static_cast<int>(vals.size());
      provider.dim_ = dim;
    } else if (static_cast<int>(vals.size()) != dim) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": inconsistent vector dimension");
    }
    Eigen::VectorXd vec(dim);
    for (int i = 0; i < dim; ++i) vec(i) = vals[i];
    provider.insert(token, std::move(vec));
  }
  if (dim < 0) throw std::runtime_error("embedding file is empty: " + path);
  return provider;
}

void EmbeddingProvider::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write embedding file: " + path);
  // sorted for reproducible bytes
  std::map<std::string, const Eigen::VectorXd*> sorted;
  for (const auto& [tok, vec] : table_) sorted[tok] = &vec;
  out.precision(17);
  for (const auto& [tok, vec] : sorted) {
    out << tok;
    for (int i = 0; i < vec->size(); ++i) out << ' ' << (*vec)(i);
    out << '\n';
  }
}

void EmbeddingProvider::insert(const std::string& token, Eigen::VectorXd vec) {
  if (vec.size() != dim_)
    throw std::invalid_argument("embedding dimension mismatch for token '" + token + "'");
  table_[to_lower(token)] = std::move(vec);
}

Eigen::VectorXd EmbeddingProvider::lookup(const std::string& token) const {
  auto it = table_.find(to_lower(token));
  if (it == table_.end()) return Eigen::VectorXd::Zero(dim_);
  return it->second;
}

bool EmbeddingProvider::contains(const std::string& token) const {
  return table_.count(to_lower(token)) > 0;
}

}  // namespace mcoref
