#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sketchnet/binary_io.hpp"
#include "sketchnet/error.hpp"
#include "sketchnet/tensor.hpp"

// Joint Bayesian metric: every sample is x = mu + eps with class mean
// mu ~ N(0, S_mu) and deviation eps ~ N(0, S_eps). Two samples are scored
// by the log-likelihood ratio of "same class" against "different class".

namespace sketchnet {

using MatrixXd = Eigen::MatrixXd;
using VectorXd = Eigen::VectorXd;
using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class FeatureNorm { Raw, L2 };

inline const char* to_string(FeatureNorm n) { return n == FeatureNorm::L2 ? "l2" : "raw"; }

inline FeatureNorm parse_feature_norm(const std::string& s) {
  if (s == "raw") return FeatureNorm::Raw;
  if (s == "l2") return FeatureNorm::L2;
  throw ConfigError("feature normalization must be raw or l2, got '" + s + "'");
}

struct JBFitConfig {
  double reg = 0.1;  // ridge weight, relative to each matrix's mean diagonal
  int max_iterations = 50;
  double tolerance = 1e-6;  // relative objective improvement; negative runs every iteration
  FeatureNorm norm = FeatureNorm::Raw;
};

namespace detail {

inline double log_det(const Eigen::LLT<MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

inline Eigen::LLT<MatrixXd> require_pd(const MatrixXd& m, const char* what) {
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw NumericError(std::string(what) + " is not positive definite");
  return llt;
}

inline MatrixXd inverse(const Eigen::LLT<MatrixXd>& llt) {
  return llt.solve(MatrixXd::Identity(llt.rows(), llt.cols()));
}

inline MatrixXd symmetrized(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

}  // namespace detail

/// S + reg * mean(diag(S)) * I.
inline MatrixXd ridge(const MatrixXd& s, double reg) {
  if (reg == 0.0) return s;
  const double mean_diag = s.diagonal().mean();
  MatrixXd out = s;
  out.diagonal().array() += reg * mean_diag;
  return out;
}

/// A fitted model. S_mu and S_eps are the fitted covariances; scoring uses
/// their ridged versions through the precomputed quadratic forms
///   r(x1, x2) = x1' A x1 + x2' A x2 - 2 x1' G x2 + c      (after centring)
/// which equals log N([x1;x2]; 0, Sigma_I) - log N([x1;x2]; 0, Sigma_E).
struct JBModel {
  MatrixXd s_mu, s_eps;
  VectorXd mean;  // subtracted from (normalized) features before scoring
  double reg = 0.1;
  FeatureNorm norm = FeatureNorm::Raw;
  std::string provenance;  // free-form key=value text, stored verbatim

  MatrixXd a, g;
  double c = 0;

  std::size_t dim() const { return static_cast<std::size_t>(s_mu.rows()); }

  /// Recomputes A, G and c from S_mu, S_eps and reg.
  void prepare() {
    const Eigen::Index d = s_mu.rows();
    if (s_mu.cols() != d || s_eps.rows() != d || s_eps.cols() != d)
      throw ShapeError("S_mu and S_eps must be square and of equal size");
    if (mean.size() == 0) mean = VectorXd::Zero(d);
    if (mean.size() != d) throw ShapeError("JB mean has the wrong length");
    const MatrixXd mu = ridge(detail::symmetrized(s_mu), reg);
    const MatrixXd eps = ridge(detail::symmetrized(s_eps), reg);
    const auto l_eps = detail::require_pd(eps, "regularized S_eps");
    const auto l_sum = detail::require_pd(mu + eps, "regularized S_mu + S_eps");
    const auto l_two = detail::require_pd(eps + 2.0 * mu, "regularized S_eps + 2 S_mu");
    const MatrixXd inv_eps = detail::inverse(l_eps);
    const MatrixXd inv_two = detail::inverse(l_two);
    const MatrixXd inv_sum = detail::inverse(l_sum);
    // Sigma_I^-1 = [[P, Q], [Q, P]] with P, Q built from the block
    // eigen-decomposition (S_eps + 2 S_mu on the symmetric part, S_eps on
    // the antisymmetric part).
    const MatrixXd p = 0.5 * (inv_two + inv_eps);
    const MatrixXd q = 0.5 * (inv_two - inv_eps);
    a = detail::symmetrized(-0.5 * (p - inv_sum));
    g = detail::symmetrized(0.5 * q);
    c = -0.5 * (detail::log_det(l_eps) + detail::log_det(l_two) - 2.0 * detail::log_det(l_sum));
  }

  /// Applies the model's normalization and centring to a raw feature.
  VectorXd transform(const float* x, std::size_t n) const {
    if (n != dim()) throw ShapeError("feature of length " + std::to_string(n) + " for a " +
                                     std::to_string(dim()) + "-dim JB model");
    VectorXd v(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = x[i];
    if (norm == FeatureNorm::L2) {
      const double len = v.norm();
      if (len > 0) v /= len;
    }
    return v - mean;
  }

  RowMatrixXd transform_rows(const Tensor<float>& rows) const {
    require_rank(rows.shape(), 2, "JB features");
    RowMatrixXd out(static_cast<Eigen::Index>(rows.dim(0)), static_cast<Eigen::Index>(dim()));
    for (std::size_t r = 0; r < rows.dim(0); ++r)
      out.row(static_cast<Eigen::Index>(r)) = transform(rows.raw() + r * rows.dim(1), rows.dim(1)).transpose();
    return out;
  }
};

/// Builds a ready-to-score model from known covariances (mean zero).
inline JBModel jb_model(MatrixXd s_mu, MatrixXd s_eps, double reg = 0.0) {
  JBModel m;
  m.s_mu = std::move(s_mu);
  m.s_eps = std::move(s_eps);
  m.reg = reg;
  m.prepare();
  return m;
}

/// Log-likelihood ratio of two already transformed vectors.
inline double jb_ratio_centered(const JBModel& m, const VectorXd& x1, const VectorXd& x2) {
  return x1.dot(m.a * x1) + x2.dot(m.a * x2) - 2.0 * x1.dot(m.g * x2) + m.c;
}

inline double jb_ratio(const JBModel& m, std::span<const float> x1, std::span<const float> x2) {
  if (x1.size() != x2.size()) throw ShapeError("jb_ratio: vectors have different lengths");
  return jb_ratio_centered(m, m.transform(x1.data(), x1.size()), m.transform(x2.data(), x2.size()));
}

/// All ratios between transformed query rows and transformed reference
/// rows, as [queries, references], via two matrix products.
inline RowMatrixXd jb_ratio_matrix(const JBModel& m, const RowMatrixXd& queries, const RowMatrixXd& refs) {
  const VectorXd qa = (queries * m.a).cwiseProduct(queries).rowwise().sum();
  const VectorXd ra = (refs * m.a).cwiseProduct(refs).rowwise().sum();
  RowMatrixXd r = -2.0 * (queries * m.g) * refs.transpose();
  r.colwise() += qa;
  r.rowwise() += ra.transpose();
  r.array() += m.c;
  return r;
}

// ------------------------------------------------------------------ fitting

struct JBFitTrace {
  std::vector<double> objective;  // penalized log-likelihood after each iteration (index 0: initial)
  int iterations = 0;
  bool converged = false;
};

namespace detail {

struct ClassStats {
  std::vector<VectorXd> means;   // centred class means
  std::vector<double> sizes;
  MatrixXd within;               // sum over classes of sum (x - xbar)(x - xbar)'
  std::size_t total = 0;
};

inline ClassStats class_stats(const RowMatrixXd& x, const std::vector<int>& labels) {
  std::map<int, std::vector<Eigen::Index>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(static_cast<Eigen::Index>(i));
  ClassStats st;
  const Eigen::Index d = x.cols();
  st.within = MatrixXd::Zero(d, d);
  st.total = labels.size();
  for (const auto& [label, idx] : members) {
    RowMatrixXd block(static_cast<Eigen::Index>(idx.size()), d);
    for (std::size_t i = 0; i < idx.size(); ++i) block.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
    const VectorXd mean = block.colwise().mean().transpose();
    block.rowwise() -= mean.transpose();
    st.within.noalias() += block.transpose() * block;
    st.means.push_back(mean);
    st.sizes.push_back(static_cast<double>(idx.size()));
  }
  return st;
}

// Floor added in every M-step: a tiny multiple of the average total
// variance. It is the exact maximizer of the penalized likelihood below,
// keeps both covariances invertible when a class has one sample or the
// data have no within-class spread, and costs nothing in accuracy.
inline constexpr double kFloorFraction = 1e-6;

struct EmState {
  MatrixXd s_mu, s_eps;
};

// log-likelihood of all data under (S_mu, S_eps) up to the constant
// N*D*log(2*pi)/2, minus the floor penalties.
inline double penalized_loglik(const ClassStats& st, const EmState& m, double tau_mu, double tau_eps) {
  const auto l_eps = require_pd(m.s_eps, "S_eps");
  const auto l_mu = require_pd(m.s_mu, "S_mu");
  const double logdet_eps = log_det(l_eps);
  const MatrixXd inv_eps = inverse(l_eps);
  double ll = -0.5 * (inv_eps.cwiseProduct(st.within).sum());
  std::map<double, std::pair<Eigen::LLT<MatrixXd>, double>> by_size;
  for (std::size_t c = 0; c < st.means.size(); ++c) {
    const double m_c = st.sizes[c];
    auto it = by_size.find(m_c);
    if (it == by_size.end()) {
      Eigen::LLT<MatrixXd> l(m.s_eps + m_c * m.s_mu);
      const double ld = log_det(l);
      it = by_size.emplace(m_c, std::make_pair(std::move(l), ld)).first;
    }
    const auto& [llt, ld] = it->second;
    ll -= 0.5 * ((m_c - 1.0) * logdet_eps + ld + m_c * st.means[c].dot(llt.solve(st.means[c])));
  }
  const double c_count = static_cast<double>(st.means.size());
  const double n_count = static_cast<double>(st.total);
  ll -= 0.5 * c_count * tau_mu * inverse(l_mu).trace();
  ll -= 0.5 * n_count * tau_eps * inv_eps.trace();
  return ll;
}

}  // namespace detail

/// Fits S_mu and S_eps to labelled rows [N, D] by expectation maximization,
/// starting from the between-class and within-class scatter.
inline JBModel jb_fit(const Tensor<float>& rows, const std::vector<int>& labels, const JBFitConfig& cfg = {},
                      JBFitTrace* trace = nullptr) {
  require_rank(rows.shape(), 2, "JB training features");
  const std::size_t n = rows.dim(0), d = rows.dim(1);
  if (labels.size() != n) throw DataError("JB fit: " + std::to_string(labels.size()) + " labels for " +
                                          std::to_string(n) + " rows");
  if (cfg.reg < 0) throw ConfigError("JB regularization must be non-negative");

  JBModel model;
  model.norm = cfg.norm;
  model.reg = cfg.reg;
  model.mean = VectorXd::Zero(static_cast<Eigen::Index>(d));
  model.s_mu = MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  RowMatrixXd x = model.transform_rows(rows);  // normalized, not yet centred
  model.mean = x.colwise().mean().transpose();
  x.rowwise() -= model.mean.transpose();

  const auto st = detail::class_stats(x, labels);
  if (std::none_of(st.sizes.begin(), st.sizes.end(), [](double s) { return s >= 2; }))
    throw DataError("JB fit needs at least one class with two or more samples");

  const double c_count = static_cast<double>(st.means.size());
  const double n_count = static_cast<double>(n);
  MatrixXd between = MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (const auto& m : st.means) between.noalias() += m * m.transpose();
  between /= c_count;
  const MatrixXd total = (x.transpose() * x) / n_count;
  double floor = detail::kFloorFraction * total.diagonal().mean();
  if (!(floor > 0)) floor = detail::kFloorFraction;
  const MatrixXd tau = floor * MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));

  detail::EmState em{between + tau, st.within / n_count + tau};
  JBFitTrace local;
  JBFitTrace& tr = trace ? *trace : local;
  tr = {};
  tr.objective.push_back(detail::penalized_loglik(st, em, floor, floor));

  for (int it = 0; it < cfg.max_iterations; ++it) {
    // E-step per class size m: posterior of mu given the class mean xbar
    //   E[mu] = m S_mu (S_eps + m S_mu)^-1 xbar
    //   Cov[mu] = S_mu - m S_mu (S_eps + m S_mu)^-1 S_mu
    std::map<double, std::pair<MatrixXd, MatrixXd>> gain_cov;
    MatrixXd acc_mu = MatrixXd::Zero(em.s_mu.rows(), em.s_mu.cols());
    MatrixXd acc_eps = st.within;
    for (std::size_t c = 0; c < st.means.size(); ++c) {
      const double m_c = st.sizes[c];
      auto found = gain_cov.find(m_c);
      if (found == gain_cov.end()) {
        const auto llt = detail::require_pd(em.s_eps + m_c * em.s_mu, "S_eps + m S_mu");
        const MatrixXd solved = llt.solve(em.s_mu);  // (S_eps + m S_mu)^-1 S_mu
        MatrixXd gain = m_c * solved.transpose();     // m S_mu (S_eps + m S_mu)^-1
        MatrixXd cov = detail::symmetrized(em.s_mu - m_c * em.s_mu * solved);
        found = gain_cov.emplace(m_c, std::make_pair(std::move(gain), std::move(cov))).first;
      }
      const auto& [gain, cov] = found->second;
      const VectorXd post = gain * st.means[c];
      acc_mu.noalias() += post * post.transpose();
      acc_mu += cov;
      const VectorXd resid = st.means[c] - post;
      acc_eps.noalias() += m_c * (resid * resid.transpose());
      acc_eps += m_c * cov;
    }
    em.s_mu = detail::symmetrized(acc_mu / c_count) + tau;
    em.s_eps = detail::symmetrized(acc_eps / n_count) + tau;
    tr.objective.push_back(detail::penalized_loglik(st, em, floor, floor));
    tr.iterations = it + 1;
    const double prev = tr.objective[tr.objective.size() - 2], cur = tr.objective.back();
    if (std::abs(cur - prev) <= cfg.tolerance * std::max(1.0, std::abs(prev))) {
      tr.converged = true;
      break;
    }
  }
  model.s_mu = em.s_mu;
  model.s_eps = em.s_eps;
  model.prepare();
  return model;
}

// ------------------------------------------------------------- KNN voting

struct CropVote {
  int label = -1;
  double score = 0;  // mean ratio of the winning label's neighbours
};

/// Top-k majority among reference labels for one row of ratios. Ties in
/// count go to the higher mean ratio, then the lower label.
inline CropVote knn_vote(const double* ratios, std::size_t n, const std::vector<int>& ref_labels, std::size_t k) {
  if (n == 0) throw DataError("KNN reference pool is empty");
  k = std::min(k, n);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(k), idx.end(), [&](std::size_t a, std::size_t b) {
    return ratios[a] != ratios[b] ? ratios[a] > ratios[b] : a < b;
  });
  std::map<int, std::pair<int, double>> tally;
  for (std::size_t i = 0; i < k; ++i) {
    auto& t = tally[ref_labels[idx[i]]];
    ++t.first;
    t.second += ratios[idx[i]];
  }
  CropVote best;
  int best_count = 0;
  for (const auto& [label, t] : tally) {
    const double mean = t.second / t.first;
    if (t.first > best_count || (t.first == best_count && mean > best.score)) {
      best = {label, mean};
      best_count = t.first;
    }
  }
  return best;
}

/// Image label from its crop votes: majority, ties to the higher summed
/// score, then the lower label.
inline int combine_votes(const std::vector<CropVote>& votes) {
  std::map<int, std::pair<int, double>> tally;
  for (const auto& v : votes) {
    auto& t = tally[v.label];
    ++t.first;
    t.second += v.score;
  }
  int best = -1, best_count = 0;
  double best_sum = 0;
  for (const auto& [label, t] : tally)
    if (t.first > best_count || (t.first == best_count && t.second > best_sum)) {
      best = label;
      best_count = t.first;
      best_sum = t.second;
    }
  return best;
}

/// Classifies test images given as groups of crop rows. `groups[i]` lists
/// the row indices in `test_rows` that belong to image i.
inline std::vector<int> jb_knn_classify(const JBModel& m, const Tensor<float>& train_rows,
                                        const std::vector<int>& train_labels, const Tensor<float>& test_rows,
                                        const std::vector<std::vector<std::size_t>>& groups, std::size_t k = 5) {
  if (train_rows.dim(0) != train_labels.size()) throw DataError("KNN: train rows and labels differ in count");
  if (train_rows.dim(0) == 0) throw DataError("KNN reference pool is empty");
  const RowMatrixXd refs = m.transform_rows(train_rows);
  const RowMatrixXd queries = m.transform_rows(test_rows);
  std::vector<CropVote> crop_votes(test_rows.dim(0));
  constexpr Eigen::Index kBlock = 256;
  for (Eigen::Index q0 = 0; q0 < queries.rows(); q0 += kBlock) {
    const Eigen::Index nq = std::min(kBlock, queries.rows() - q0);
    const RowMatrixXd r = jb_ratio_matrix(m, queries.middleRows(q0, nq), refs);
    for (Eigen::Index i = 0; i < nq; ++i)
      crop_votes[static_cast<std::size_t>(q0 + i)] =
          knn_vote(r.row(i).data(), static_cast<std::size_t>(r.cols()), train_labels, k);
  }
  std::vector<int> out;
  for (const auto& g : groups) {
    std::vector<CropVote> votes;
    for (auto i : g) votes.push_back(crop_votes.at(i));
    out.push_back(combine_votes(votes));
  }
  return out;
}

// -------------------------------------------------------------- model file

inline constexpr char kJBMagic[8] = {'S', 'K', 'N', 'J', 'B', '0', '0', '1'};

inline void save_jb_model(const JBModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  BinaryWriter w(out);
  w.bytes(kJBMagic, sizeof kJBMagic);
  w.u32(static_cast<std::uint32_t>(m.dim()));
  w.f64(m.reg);
  w.string(to_string(m.norm));
  w.string(m.provenance);
  auto put = [&](const double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) w.f64(p[i]);
  };
  put(m.mean.data(), m.dim());
  put(m.s_mu.data(), m.dim() * m.dim());
  put(m.s_eps.data(), m.dim() * m.dim());
  if (!out) throw DataError("write failed for " + path);
}

inline JBModel load_jb_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  BinaryReader r(in);
  try {
    char magic[8];
    r.bytes(magic, sizeof magic);
    if (std::memcmp(magic, kJBMagic, sizeof magic) != 0) throw DataError(path + " is not a JB model");
    const auto d = static_cast<Eigen::Index>(r.u32());
    if (d == 0 || d > 65536) throw DataError(path + ": bad dimension");
    JBModel m;
    m.reg = r.f64();
    m.norm = parse_feature_norm(r.string(16));
    m.provenance = r.string();
    m.mean.resize(d);
    m.s_mu.resize(d, d);
    m.s_eps.resize(d, d);
    for (Eigen::Index i = 0; i < d; ++i) m.mean[i] = r.f64();
    for (Eigen::Index i = 0; i < d * d; ++i) m.s_mu.data()[i] = r.f64();
    for (Eigen::Index i = 0; i < d * d; ++i) m.s_eps.data()[i] = r.f64();
    m.prepare();
    return m;
  } catch (const BinaryReader::Eof&) {
    throw DataError(path + " is truncated");
  }
}

}  // namespace sketchnet
