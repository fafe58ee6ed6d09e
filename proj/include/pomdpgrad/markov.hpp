#pragma once

// Finite Markov chain utilities: recurrent class detection, stationary
// distributions, and the average-cost Poisson equation. Dense solves
// throughout; joint chains at desk scale stay below ~10^4 states.

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace pomdpgrad {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct ChainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Strongly connected components of the support graph of P (Tarjan,
// iterative). Returns one vector of state indices per component.
inline std::vector<std::vector<int>> strongly_connected_components(
    const MatrixXd& P, double support_tol = 0.0) {
  const int n = static_cast<int>(P.rows());
  std::vector<int> index(n, -1), low(n, 0), on_stack(n, 0);
  std::vector<int> stack;
  std::vector<std::vector<int>> comps;
  int counter = 0;

  struct Frame {
    int v;
    int next;
  };
  for (int root = 0; root < n; ++root) {
    if (index[root] != -1) continue;
    std::vector<Frame> frames{{root, 0}};
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = 1;
    while (!frames.empty()) {
      Frame& f = frames.back();
      int v = f.v;
      bool descended = false;
      while (f.next < n) {
        int w = f.next++;
        if (P(v, w) <= support_tol) continue;
        if (index[w] == -1) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = 1;
          frames.push_back({w, 0});
          descended = true;
          break;
        }
        if (on_stack[w]) low[v] = std::min(low[v], index[w]);
      }
      if (descended) continue;
      if (low[v] == index[v]) {
        std::vector<int> comp;
        int w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = 0;
          comp.push_back(w);
        } while (w != v);
        comps.push_back(std::move(comp));
      }
      frames.pop_back();
      if (!frames.empty()) {
        int parent = frames.back().v;
        low[parent] = std::min(low[parent], low[v]);
      }
    }
  }
  return comps;
}

// Components with no transition leaving them.
inline std::vector<std::vector<int>> recurrent_classes(const MatrixXd& P) {
  auto comps = strongly_connected_components(P);
  const int n = static_cast<int>(P.rows());
  std::vector<int> comp_of(n, -1);
  for (std::size_t c = 0; c < comps.size(); ++c)
    for (int s : comps[c]) comp_of[s] = static_cast<int>(c);
  std::vector<std::vector<int>> out;
  for (std::size_t c = 0; c < comps.size(); ++c) {
    bool closed = true;
    for (int s : comps[c]) {
      for (int j = 0; j < n && closed; ++j)
        if (P(s, j) > 0.0 && comp_of[j] != static_cast<int>(c)) closed = false;
      if (!closed) break;
    }
    if (closed) out.push_back(comps[c]);
  }
  return out;
}

inline std::string describe_classes(const std::vector<std::vector<int>>& classes) {
  std::string s;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    s += (c ? "; class {" : "class {");
    for (std::size_t i = 0; i < classes[c].size(); ++i)
      s += (i ? "," : "") + std::to_string(classes[c][i]);
    s += "}";
  }
  return s;
}

// Unique stationary distribution of a unichain; transient states get zero
// mass. Multiple recurrent classes are an assumption violation.
inline VectorXd stationary_distribution(const MatrixXd& P) {
  const int n = static_cast<int>(P.rows());
  auto classes = recurrent_classes(P);
  if (classes.size() != 1)
    throw ChainError("chain has " + std::to_string(classes.size()) +
                     " recurrent classes (expected a unichain): " +
                     describe_classes(classes));
  const auto& rc = classes[0];
  const int m = static_cast<int>(rc.size());
  MatrixXd Pc(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) Pc(i, j) = P(rc[i], rc[j]);
  // pi' (Pc - I) = 0 with one balance equation replaced by normalization
  MatrixXd A = Pc.transpose() - MatrixXd::Identity(m, m);
  A.row(m - 1).setOnes();
  VectorXd b = VectorXd::Zero(m);
  b(m - 1) = 1.0;
  VectorXd pic = A.fullPivLu().solve(b);
  VectorXd pi = VectorXd::Zero(n);
  for (int i = 0; i < m; ++i) pi(rc[i]) = std::max(0.0, pic(i));
  pi /= pi.sum();
  return pi;
}

// Average cost eta = pi.g and bias h with h = g - eta 1 + P h, pi.h = 0.
// The shifted matrix I - P + 1 pi' is nonsingular for unichains.
inline std::pair<double, VectorXd> poisson_solve(const MatrixXd& P,
                                                 const VectorXd& g,
                                                 const VectorXd& pi) {
  const int n = static_cast<int>(P.rows());
  const double eta = pi.dot(g);
  MatrixXd A = MatrixXd::Identity(n, n) - P;
  A.noalias() += VectorXd::Ones(n) * pi.transpose();
  VectorXd h = A.partialPivLu().solve(g - VectorXd::Constant(n, eta));
  return {eta, h};
}

}  // namespace pomdpgrad
