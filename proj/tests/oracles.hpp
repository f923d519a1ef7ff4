#pragma once

// Independent reference implementations used only by the tests. Each one is
// deliberately naive: breadth-first search, exhaustive enumeration or direct
// pairwise loops, never the closed forms used by the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "latentadv/attacks.hpp"
#include "latentadv/manifold.hpp"

namespace oracle {

// Shortest edit script between short strings over `alphabet` by BFS, with
// insert, delete, substitute and adjacent swap as unit-cost moves.
// Intermediate strings are capped at max_len characters.
class EditGraph {
 public:
  EditGraph(std::string alphabet, int max_len) : alphabet_(std::move(alphabet)), max_len_(max_len) {
    base_ = static_cast<int>(alphabet_.size()) + 1;
    std::uint64_t n = 1;
    for (int i = 0; i < max_len_; ++i) n *= static_cast<std::uint64_t>(base_);
    states_ = static_cast<std::size_t>(n * static_cast<std::uint64_t>(base_));
  }

  // Distances from `source` to every reachable string, indexed by code().
  std::vector<int> distances_from(const std::string& source) const {
    std::vector<int> dist(states_, -1);
    std::queue<std::string> q;
    dist[code(source)] = 0;
    q.push(source);
    while (!q.empty()) {
      const std::string s = q.front();
      q.pop();
      const int d = dist[code(s)];
      auto visit = [&](const std::string& t) {
        auto& slot = dist[code(t)];
        if (slot < 0) {
          slot = d + 1;
          q.push(t);
        }
      };
      for (std::size_t i = 0; i < s.size(); ++i) {
        std::string t = s;
        t.erase(i, 1);
        visit(t);
        for (char c : alphabet_) {
          if (c == s[i]) continue;
          std::string u = s;
          u[i] = c;
          visit(u);
        }
        if (i + 1 < s.size() && s[i] != s[i + 1]) {
          std::string u = s;
          std::swap(u[i], u[i + 1]);
          visit(u);
        }
      }
      if (static_cast<int>(s.size()) < max_len_) {
        for (std::size_t i = 0; i <= s.size(); ++i) {
          for (char c : alphabet_) {
            std::string t = s;
            t.insert(t.begin() + static_cast<long>(i), c);
            visit(t);
          }
        }
      }
    }
    return dist;
  }

  std::size_t code(const std::string& s) const {
    std::size_t v = 0;
    for (char c : s) v = v * static_cast<std::size_t>(base_) + alphabet_.find(c) + 1;
    return v;
  }

 private:
  std::string alphabet_;
  int max_len_;
  int base_;
  std::size_t states_;
};

// Every string of length 0..max_len over the alphabet.
inline std::vector<std::string> all_strings(const std::string& alphabet, int max_len) {
  std::vector<std::string> out = {""};
  std::vector<std::string> layer = {""};
  for (int l = 1; l <= max_len; ++l) {
    std::vector<std::string> next;
    for (const auto& s : layer) {
      for (char c : alphabet) next.push_back(s + c);
    }
    out.insert(out.end(), next.begin(), next.end());
    layer = std::move(next);
  }
  return out;
}

inline latentadv::ActivitySequence to_sequence(const std::string& s) {
  latentadv::ActivitySequence out;
  for (char c : s) out.emplace_back(1, c);
  return out;
}

// Minimum transport cost between two histograms on bins 0..n-1 with ground
// distance |i - j|. Surplus mass of the heavier side is carried to a sink bin
// at position n. Solved by trying every assignment of unit masses.
inline double transport_cost(const std::vector<int>& a, const std::vector<int>& b) {
  const int n = static_cast<int>(a.size());
  std::vector<int> from, to;
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < a[static_cast<std::size_t>(i)]; ++k) from.push_back(i);
    for (int k = 0; k < b[static_cast<std::size_t>(i)]; ++k) to.push_back(i);
  }
  while (from.size() < to.size()) from.push_back(n);
  while (to.size() < from.size()) to.push_back(n);
  std::vector<std::size_t> perm(to.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (std::size_t i = 0; i < from.size(); ++i) cost += std::abs(from[i] - to[perm[i]]);
    best = std::min(best, cost);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return from.empty() ? 0.0 : best;
}

// Index of the candidate nearest to the original in posterior-mean space,
// encoding each sequence on its own.
inline std::size_t closest_index(const latentadv::ActivitySequence& original,
                                 const std::vector<latentadv::ActivitySequence>& candidates,
                                 const latentadv::ClassManifold& manifold) {
  const Eigen::VectorXd mu0 = manifold.encode(original).mu;
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Eigen::VectorXd mu = manifold.encode(candidates[i]).mu;
    double s = 0.0;
    for (Eigen::Index k = 0; k < mu.size(); ++k) s += (mu[k] - mu0[k]) * (mu[k] - mu0[k]);
    const double d = std::sqrt(s);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

// Share of (positive, negative) pairs ranked correctly, ties counting one half.
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double good = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) good += 1.0;
      if (scores[i] == scores[j]) good += 0.5;
    }
  }
  return good / pairs;
}

inline double f1_at(const std::vector<double>& p, const std::vector<int>& y, double tau) {
  int tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const int pred = p[i] >= tau ? 1 : 0;
    tp += pred == 1 && y[i] == 1;
    fp += pred == 1 && y[i] == 0;
    fn += pred == 0 && y[i] == 1;
  }
  return tp == 0 ? 0.0 : 2.0 * tp / (2.0 * tp + fp + fn);
}

// Best F1 over a dense grid of thresholds on (0, 1].
inline double best_f1_scan(const std::vector<double>& p, const std::vector<int>& y, int steps = 100000) {
  double best = 0.0;
  for (int i = 1; i <= steps; ++i) best = std::max(best, f1_at(p, y, static_cast<double>(i) / steps));
  return best;
}

}  // namespace oracle
