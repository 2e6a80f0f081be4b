#include "clustloc/efficiency.hpp"

#include <cmath>

#include "clustloc/errors.hpp"
#include "clustloc/parallel.hpp"

namespace clustloc {

const char* to_string(Family family) { return family == Family::Normal ? "normal" : "t"; }

const char* to_string(Weighting weighting) {
  return weighting == Weighting::Unweighted ? "unweighted" : "optimal";
}

void validate(const PopulationModel& model) {
  require(model.p >= 1, "PopulationModel: p must be positive");
  require(model.rho >= 0.0 && model.rho < 1.0, "PopulationModel: rho must be in [0, 1)");
  if (model.family == Family::T) require(model.nu > 0.0, "PopulationModel: nu must be positive");
}

namespace {

bool is_normal(const PopulationModel& m) {
  return m.family == Family::Normal || std::isinf(m.nu);
}

class Sampler {
 public:
  Sampler(const PopulationModel& model, RandomStream stream) : m_(model), rs_(stream) {}

  Vector normal() {
    Vector z(m_.p);
    for (int k = 0; k < m_.p; ++k) z[k] = rs_.normal();
    return z;
  }
  double scale() { return is_normal(m_) ? 1.0 : 1.0 / std::sqrt(rs_.chi_squared(m_.nu) / m_.nu); }
  Vector marginal() {
    Vector z = normal();
    return z * scale();
  }
  // Two members of one cluster: shared effect and shared scale divisor.
  std::pair<Vector, Vector> pair() {
    const Vector b = normal() * std::sqrt(m_.rho);
    const double q = std::sqrt(1.0 - m_.rho);
    Vector e1 = b + q * normal();
    Vector e2 = b + q * normal();
    const double s = scale();
    return {e1 * s, e2 * s};
  }

 private:
  const PopulationModel& m_;
  RandomStream rs_;
};

Vector sgn(const Vector& v) {
  const double n = v.norm();
  return n > 0.0 ? Vector(v / n) : Vector::Zero(v.size());
}

// Score of e against an independent reference draw r.
Vector score_against(ScoreKind kind, const Vector& e, const Vector& r) {
  if (kind == ScoreKind::Rank) return sgn(e - r);
  return 0.5 * (sgn(e - r) + sgn(e + r));
}

MomentScalars batch_moments(const PopulationModel& model, ScoreKind kind, std::size_t draws,
                            std::uint64_t seed, std::size_t batch) {
  const double p = model.p;
  Sampler marg(model, RandomStream(seed, 2 * batch));
  Sampler within(model, RandomStream(seed, 2 * batch + 1));
  double sa = 0.0, sb = 0.0, sc = 0.0;
  for (std::size_t r = 0; r < draws; ++r) {
    const Vector e1 = marg.marginal();
    const auto [ei, ej] = within.pair();
    if (kind == ScoreKind::Sign) {
      const double ne = e1.norm();
      if (ne > 0.0) sa += 1.0 / ne;
      sc += sgn(ei).dot(sgn(ej));
      continue;
    }
    const Vector e2 = marg.marginal();
    const Vector e3 = marg.marginal();
    const Vector r3 = within.marginal();
    const Vector r4 = within.marginal();
    const double na = kind == ScoreKind::Rank ? (e1 - e2).norm() : (e1 + e2).norm();
    if (na > 0.0) sa += 1.0 / na;
    sb += score_against(kind, e1, e2).dot(score_against(kind, e1, e3));
    // b - c = E(T_i - T_j)'(T_i - T_j) / 2p, estimated from the pair itself so
    // that it stays precise as rho -> 1.
    sc += 0.5 * (score_against(kind, ei, r3) - score_against(kind, ej, r3))
                    .dot(score_against(kind, ei, r4) - score_against(kind, ej, r4));
  }
  const double nd = static_cast<double>(draws);
  MomentScalars out;
  out.a = (p - 1.0) / p * sa / nd;
  out.b = kind == ScoreKind::Sign ? 1.0 / p : sb / nd / p;
  out.c = kind == ScoreKind::Sign ? sc / nd / p : out.b - sc / nd / p;
  return out;
}

MomentScalars identity_moments(const PopulationModel& model) {
  double v = 1.0;
  if (!is_normal(model)) {
    if (!(model.nu > 2.0))
      fail(ErrorCode::MomentNonexistence, "identity-score moments need nu > 2");
    v = model.nu / (model.nu - 2.0);
  }
  return {1.0, v, model.rho * v};
}

}  // namespace

MomentBatches score_moment_batches(const PopulationModel& model, ScoreKind kind,
                                   std::size_t draws, std::size_t batches, std::uint64_t seed,
                                   unsigned threads) {
  validate(model);
  require(batches >= 1, "score_moment_batches: need at least one batch");
  MomentBatches out;
  if (kind == ScoreKind::Identity) {
    out.pooled = identity_moments(model);
    out.batches.assign(batches, out.pooled);
    return out;
  }
  require(draws >= batches, "score_moment_batches: fewer draws than batches");
  const std::size_t per = draws / batches;
  out.batches.resize(batches);
  parallel_chunks(batches, threads, [&](std::size_t begin, std::size_t end, unsigned) {
    for (std::size_t k = begin; k < end; ++k) out.batches[k] = batch_moments(model, kind, per, seed, k);
  });
  for (const auto& m : out.batches) {
    out.pooled.a += m.a;
    out.pooled.b += m.b;
    out.pooled.c += m.c;
  }
  const double nb = static_cast<double>(batches);
  out.pooled.a /= nb;
  out.pooled.b /= nb;
  out.pooled.c /= nb;
  return out;
}

ScoreMatrices to_matrices(const MomentScalars& m, int p) {
  const Matrix id = Matrix::Identity(p, p);
  ScoreMatrices out;
  out.A = m.a * id;
  out.B = m.b * id;
  out.C = m.c * id;
  return out;
}

ScoreMatrices score_moments(const PopulationModel& model, ScoreKind kind, std::size_t draws,
                            RandomStream& stream) {
  if (kind != ScoreKind::Identity) require(draws >= 10000, "score_moments: need at least 1e4 draws");
  const std::uint64_t seed = stream();
  return to_matrices(score_moment_batches(model, kind, draws, 1, seed).pooled, model.p);
}

NoncentralityResult noncentrality_one_sample(const ScoreMatrices& sm, const Vector& delta) {
  require(delta.size() == sm.A.rows(), "noncentrality_one_sample: dimension mismatch");
  Matrix middle = sm.D_B * sm.B;
  if (sm.D_C != 0.0) middle += sm.D_C * sm.C;
  middle = 0.5 * (middle + middle.transpose());
  NoncentralityResult out;
  out.df = static_cast<int>(delta.size());
  const Vector ad = sm.A * delta;
  out.ncp = std::max(0.0, inverse_quadratic_form(middle, ad, &out.rank_deficient));
  out.ncp_alt = out.ncp;
  return out;
}

namespace {

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index s = 0; s < a.cols(); ++s)
      out.block(r * b.rows(), s * b.cols(), b.rows(), b.cols()) = a(r, s) * b;
  return out;
}

Vector vec(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

}  // namespace

NoncentralityResult noncentrality_c_sample(const ScoreMatrices& sm, const DesignLimits& limits,
                                           const Matrix& delta0) {
  const Eigen::Index p = sm.A.rows();
  const Eigen::Index c = limits.lambda.size();
  require(c >= 2 && limits.D_B.rows() == c && limits.D_C.rows() == c,
          "noncentrality_c_sample: limits need at least two groups");
  require(delta0.rows() == p && delta0.cols() == c, "noncentrality_c_sample: Delta0 must be p x c");

  NoncentralityResult out;
  out.df = static_cast<int>(p * (c - 1));
  const Vector& lambda = limits.lambda;
  Matrix d0 = delta0;
  const Vector drift = d0 * lambda;
  if (drift.norm() > 1e-8 * std::max(1.0, d0.norm())) {
    d0 -= drift * lambda.transpose() / lambda.squaredNorm();
    out.projected = true;
  }

  const Matrix lam = lambda.asDiagonal();
  const Eigen::Index h = c - 1;
  const Matrix a_inv = sm.A.inverse();
  const Matrix ab = a_inv * sm.B * a_inv.transpose();
  const Matrix ac = a_inv * sm.C * a_inv.transpose();
  const Vector v = vec((d0 * lam).leftCols(h));
  Matrix middle = kron(limits.D_B.topLeftCorner(h, h), ab) + kron(limits.D_C.topLeftCorner(h, h), ac);
  middle = 0.5 * (middle + middle.transpose());
  out.ncp = std::max(0.0, inverse_quadratic_form(middle, v, &out.rank_deficient));

  const Vector u = vec(sm.A * d0 * lam);
  Matrix full = kron(limits.D_B, sm.B) + kron(limits.D_C, sm.C);
  full = 0.5 * (full + full.transpose());
  out.ncp_alt = std::max(0.0, u.dot(pinv_psd(full) * u));

  const double scale = std::max({std::abs(out.ncp), std::abs(out.ncp_alt), 1e-300});
  if (std::abs(out.ncp - out.ncp_alt) > 1e-6 * scale && scale > 1e-12)
    fail(ErrorCode::InternalError,
         "noncentrality_c_sample: displayed forms disagree (limits matrices inconsistent)");
  return out;
}

Design idealized_design(const IdealDesignSpec& spec) {
  require(!spec.sizes.empty(), "idealized_design: no cluster sizes");
  std::size_t largest = 0;
  for (std::size_t m : spec.sizes) {
    require(m >= 1, "idealized_design: cluster sizes must be positive");
    largest = std::max(largest, m);
  }
  std::vector<int> clusters, groups;
  int next = 0;
  auto add_cluster = [&](std::size_t m, std::size_t in_first, std::size_t copies) {
    for (std::size_t c = 0; c < copies; ++c, ++next)
      for (std::size_t u = 0; u < m; ++u) {
        clusters.push_back(next);
        groups.push_back(u < in_first ? 0 : 1);
      }
  };
  switch (spec.scheme) {
    case PermutationScheme::A: {
      require(largest <= 16, "idealized_design: design A supports cluster sizes up to 16");
      // Composition j of a size-m cluster has probability C(m, j) / 2^m;
      // scaling by 2^largest makes every multiplicity an integer.
      for (std::size_t m : spec.sizes) {
        double binom = 1.0;
        for (std::size_t j = 0; j <= m; ++j) {
          add_cluster(m, j, static_cast<std::size_t>(std::llround(binom)) << (largest - m));
          binom = binom * static_cast<double>(m - j) / static_cast<double>(j + 1);
        }
      }
      break;
    }
    case PermutationScheme::B:
      for (std::size_t m : spec.sizes) {
        if (m % 2 == 0) {
          add_cluster(m, m / 2, 2);
        } else {
          add_cluster(m, m / 2, 1);
          add_cluster(m, m / 2 + 1, 1);
        }
      }
      break;
    case PermutationScheme::C:
      for (std::size_t m : spec.sizes) {
        add_cluster(m, m, 1);
        add_cluster(m, 0, 1);
      }
      break;
  }
  return build_design(std::span<const int>(clusters), std::span<const int>(groups));
}

double two_sample_ncp(const MomentScalars& m, int p, const Design& design, Weighting weighting,
                      double rho) {
  require(design.c == 2, "two_sample_ncp: needs two groups");
  const WeightVector w = weighting == Weighting::Optimal ? optimal_weights_two_sample(design, rho)
                                                         : WeightVector::unit(design.n);
  const DesignLimits lim = design_limits(design, w);
  // Contrast mu_1 - mu_2 = 1 along (1,...,1) with Delta0 lambda = 0.
  Matrix d0(p, 2);
  d0.col(0).setConstant(lim.lambda[1]);
  d0.col(1).setConstant(-lim.lambda[0]);
  d0 /= lim.lambda.sum();
  return noncentrality_c_sample(to_matrices(m, p), lim, d0).ncp;
}

std::vector<double> default_rho_grid() {
  std::vector<double> out;
  for (int k = 0; k < 20; ++k) out.push_back(0.05 * k);
  return out;
}

std::vector<AreRow> are_curve(const std::vector<PopulationModel>& models, const IdealDesignSpec& spec,
                              const std::vector<ScoreKind>& kinds,
                              const std::vector<Weighting>& weightings, const AreOptions& options) {
  const Design design = idealized_design(spec);
  std::vector<AreRow> rows;
  for (const auto& model : models) {
    validate(model);
    const MomentScalars ref = identity_moments(model);
    const double base = two_sample_ncp(ref, model.p, design, Weighting::Unweighted, model.rho);
    for (ScoreKind kind : kinds) {
      require(kind != ScoreKind::SignedRank, "are_curve: signed-rank scores have no c-sample test");
      const MomentBatches mb =
          score_moment_batches(model, kind, options.draws, options.batches, options.seed, options.threads);
      for (Weighting weighting : weightings) {
        AreRow row;
        row.scheme = spec.scheme;
        row.kind = kind;
        row.weighting = weighting;
        row.model = model;
        row.are = two_sample_ncp(mb.pooled, model.p, design, weighting, model.rho) / base;
        if (kind != ScoreKind::Identity && mb.batches.size() > 1) {
          double s = 0.0, s2 = 0.0;
          for (const auto& b : mb.batches) {
            const double r = two_sample_ncp(b, model.p, design, weighting, model.rho) / base;
            s += r;
            s2 += r * r;
          }
          const double k = static_cast<double>(mb.batches.size());
          const double var = std::max(0.0, (s2 - s * s / k) / (k - 1.0));
          row.mc_se = std::sqrt(var / k);
        }
        rows.push_back(row);
      }
    }
  }
  return rows;
}

}  // namespace clustloc
