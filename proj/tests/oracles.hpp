#pragma once

// Direct, unoptimized reference implementations used as test oracles.
// They share no code with the library beyond plain containers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

namespace oracle {

struct Calibration {
  double ece = 0, mce = 0, sce = 0, ace = 0, tace = 0;
};

struct Bin {
  double conf = 0, acc = 0;
  std::size_t n = 0;
};

inline std::vector<Bin> equal_width(const std::vector<double>& conf, const std::vector<int>& correct, int nb) {
  std::vector<Bin> bins(nb);
  for (std::size_t i = 0; i < conf.size(); ++i) {
    for (int b = 0; b < nb; ++b) {
      const double lo = static_cast<double>(b) / nb, hi = static_cast<double>(b + 1) / nb;
      const bool last = b == nb - 1;
      if (conf[i] >= lo && (conf[i] < hi || (last && conf[i] <= hi))) {
        bins[b].conf += conf[i];
        bins[b].acc += correct[i];
        ++bins[b].n;
        break;
      }
    }
  }
  return bins;
}

inline std::vector<Bin> equal_mass(const std::vector<double>& conf, const std::vector<int>& correct, int nb) {
  std::vector<std::pair<double, int>> s;
  for (std::size_t i = 0; i < conf.size(); ++i) s.emplace_back(conf[i], correct[i]);
  std::sort(s.begin(), s.end());
  std::vector<Bin> bins(nb);
  const std::size_t n = s.size();
  std::size_t pos = 0;
  for (int b = 0; b < nb; ++b) {
    const std::size_t size = n / nb + (static_cast<std::size_t>(b) < n % nb ? 1 : 0);
    for (std::size_t j = 0; j < size; ++j, ++pos) {
      bins[b].conf += s[pos].first;
      bins[b].acc += s[pos].second;
      ++bins[b].n;
    }
  }
  return bins;
}

inline double gap(const Bin& b) { return std::abs(b.acc / b.n - b.conf / b.n); }

inline double mean_gap(const std::vector<Bin>& bins) {
  double s = 0;
  int used = 0;
  for (const auto& b : bins) {
    if (b.n == 0) continue;
    s += gap(b);
    ++used;
  }
  return used ? s / used : 0.0;
}

// probs: N x C row-major. Prediction = first maximal class.
inline Calibration calibration(const std::vector<int>& y, const std::vector<double>& probs, int c, int nb,
                               double threshold) {
  std::vector<double> conf;
  std::vector<int> correct;
  for (std::size_t i = 0; i < y.size(); ++i) {
    int best = 0;
    for (int k = 1; k < c; ++k)
      if (probs[i * c + k] > probs[i * c + best]) best = k;
    conf.push_back(probs[i * c + best]);
    correct.push_back(best == y[i]);
  }
  Calibration out;
  auto w = equal_width(conf, correct, nb);
  for (const auto& b : w) {
    if (b.n == 0) continue;
    out.ece += static_cast<double>(b.n) / conf.size() * gap(b);
    out.mce = std::max(out.mce, gap(b));
  }
  out.sce = mean_gap(w);
  out.ace = mean_gap(equal_mass(conf, correct, nb));
  std::vector<double> kc;
  std::vector<int> kk;
  for (std::size_t i = 0; i < conf.size(); ++i) {
    if (conf[i] >= threshold) {
      kc.push_back(conf[i]);
      kk.push_back(correct[i]);
    }
  }
  out.tace = kc.empty() ? 0.0 : mean_gap(equal_mass(kc, kk, nb));
  return out;
}

// rows: N x D. Order of base rows by descending cosine with q, ties by ascending id.
inline std::vector<std::size_t> cosine_order(const std::vector<std::vector<double>>& base,
                                             const std::vector<std::string>& ids, const std::vector<double>& q) {
  auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0, na = 0, nb = 0;
    for (std::size_t j = 0; j < a.size(); ++j) {
      d += a[j] * b[j];
      na += a[j] * a[j];
      nb += b[j] * b[j];
    }
    return d / std::sqrt(na * nb);
  };
  std::vector<double> sim(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) sim[i] = cosine(base[i], q);
  std::vector<std::size_t> order(base.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (sim[a] != sim[b]) return sim[a] > sim[b];
    return ids[a] < ids[b];
  });
  return order;
}

inline int majority(const std::vector<std::size_t>& order, std::size_t k, const std::vector<int>& labels, int c) {
  std::vector<int> votes(c, 0);
  for (std::size_t i = 0; i < k; ++i) ++votes[labels[order[i]]];
  int best = 0;
  for (int k2 = 1; k2 < c; ++k2)
    if (votes[k2] > votes[best]) best = k2;
  return best;
}

// Center by the support mean, average per class, assign to the highest-cosine prototype.
inline std::vector<int> simpleshot(const std::vector<std::vector<double>>& support, const std::vector<int>& labels,
                                   const std::vector<std::vector<double>>& queries, int c) {
  const std::size_t d = support[0].size();
  std::vector<double> mean(d, 0.0);
  for (const auto& r : support)
    for (std::size_t j = 0; j < d; ++j) mean[j] += r[j] / support.size();
  std::vector<std::vector<double>> proto(c, std::vector<double>(d, 0.0));
  std::vector<int> cnt(c, 0);
  for (std::size_t i = 0; i < support.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) proto[labels[i]][j] += support[i][j] - mean[j];
    ++cnt[labels[i]];
  }
  std::vector<int> out;
  for (const auto& q : queries) {
    int best = -1;
    double best_sim = -2;
    for (int k = 0; k < c; ++k) {
      if (!cnt[k]) continue;
      double dp = 0, nq = 0, np = 0;
      for (std::size_t j = 0; j < d; ++j) {
        const double p = proto[k][j] / cnt[k], x = q[j] - mean[j];
        dp += p * x;
        nq += x * x;
        np += p * p;
      }
      const double sim = nq > 0 && np > 0 ? dp / std::sqrt(nq * np) : 0.0;
      if (best < 0 || sim > best_sim) {
        best = k;
        best_sim = sim;
      }
    }
    out.push_back(best);
  }
  return out;
}

// Mean over samples of |N_k^a(i) ∩ N_k^b(i)| / k, neighbor sets by cosine excluding i.
inline double mutual_knn(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b,
                         const std::vector<std::string>& ids, std::size_t k) {
  auto neigh = [&](const std::vector<std::vector<double>>& x, std::size_t i) {
    auto order = cosine_order(x, ids, x[i]);
    std::set<std::size_t> s;
    for (std::size_t idx : order) {
      if (idx == i) continue;
      s.insert(idx);
      if (s.size() == k) break;
    }
    return s;
  };
  double total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto na = neigh(a, i), nb = neigh(b, i);
    std::size_t common = 0;
    for (auto v : na) common += nb.count(v);
    total += static_cast<double>(common) / k;
  }
  return total / a.size();
}

// Step-up: adjusted p_(i) = min_{j >= i} m p_(j) / j, capped at 1.
inline std::vector<double> benjamini_hochberg(const std::vector<double>& p) {
  const std::size_t m = p.size();
  std::vector<double> adj(m);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t rank = 1;
    for (std::size_t j = 0; j < m; ++j)
      if (p[j] < p[i] || (p[j] == p[i] && j < i)) ++rank;
    double best = 1.0;
    for (std::size_t j = 0; j < m; ++j) {
      std::size_t rj = 1;
      for (std::size_t l = 0; l < m; ++l)
        if (p[l] < p[j] || (p[l] == p[j] && l < j)) ++rj;
      if (rj >= rank) best = std::min(best, p[j] * m / rj);
    }
    adj[i] = best;
  }
  return adj;
}

}  // namespace oracle
