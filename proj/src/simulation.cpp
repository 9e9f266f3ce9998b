#include "htefuse/simulation.hpp"

#include "htefuse/rng.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace htefuse {

Eigen::VectorXd SimulationConfig::alpha_star() const {
  Eigen::VectorXd a = Eigen::VectorXd::Zero(p);
  a.segment(0, 4).setConstant(signal);
  a.segment(4, 4).setConstant(-signal);
  return a;
}

Eigen::VectorXd SimulationConfig::beta_star() const {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
  if (confounded) {
    b.segment(0, 2).setConstant(signal);
    b.segment(2, 2).setConstant(-signal);
  }
  return b;
}

void SimulationConfig::validate() const {
  if (n < 10) throw std::invalid_argument("simulation n must be >= 10");
  if (p < 8) throw std::invalid_argument("simulation p must be >= 8");
  if (!(target_cr >= 0.0 && target_cr < 1.0))
    throw std::invalid_argument("target censoring rate must lie in [0, 1)");
  for (double pr : {pr_s1, pr_a}) {
    if (!(pr > 0.0 && pr < 1.0))
      throw std::invalid_argument("source/treatment probabilities must lie in (0, 1)");
  }
  if (!(rho > -1.0 && rho < 1.0)) throw std::invalid_argument("rho must lie in (-1, 1)");
  if (!(censor_window > 0.0)) throw std::invalid_argument("censor window must be positive");
}

namespace {

// Draws from the data-generating model; the censoring window is applied
// separately so calibration can reuse the same failure-time stream.
class DgpSampler {
 public:
  explicit DgpSampler(const SimulationConfig& cfg)
      : cfg_(cfg), alpha_(cfg.alpha_star()), beta_(cfg.beta_star()) {
    Eigen::MatrixXd sigma(cfg.p, cfg.p);
    for (int i = 0; i < cfg.p; ++i)
      for (int j = 0; j < cfg.p; ++j) sigma(i, j) = std::pow(cfg.rho, std::abs(i - j));
    chol_ = sigma.llt().matrixL();
  }

  struct Row {
    int s, a;
    Eigen::VectorXd x;
    double log_failure;
  };

  Row draw(std::mt19937_64& eng) const {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Row r;
    r.s = unif(eng) < cfg_.pr_s1 ? 1 : 0;
    r.a = unif(eng) < cfg_.pr_a ? 1 : 0;
    Eigen::VectorXd z(cfg_.p);
    for (int j = 0; j < cfg_.p; ++j) z[j] = gauss(eng);
    r.x = chol_ * z;
    for (int j = 0; j < std::min(8, cfg_.p); ++j) r.x[j] += 0.2 * r.a;

    const double xa = r.x.dot(alpha_);
    const double xb = r.x.dot(beta_);
    const double mu0 = std::sin(r.x[0]) + 0.2 * r.x[3] * r.x[3] - 0.5 * xa -
                       0.5 * (1 - r.s) * xb;
    const double u = r.a * xb + gauss(eng);
    double eps;
    if (cfg_.error_dist == ErrorDist::Normal) {
      eps = gauss(eng);
    } else {
      const double q = unif(eng);
      eps = std::log(q / (1.0 - q));  // standard logistic
    }
    r.log_failure = mu0 + r.a * xa + (1 - r.s) * u + eps;
    return r;
  }

 private:
  SimulationConfig cfg_;
  Eigen::VectorXd alpha_, beta_;
  Eigen::MatrixXd chol_;
};

}  // namespace

std::pair<double, double> calibrate_censoring(const SimulationConfig& cfg, int mc,
                                              std::uint64_t seed) {
  cfg.validate();
  if (mc < 10000) throw std::invalid_argument("calibrate_censoring: mc must be >= 10000");
  const DgpSampler sampler(cfg);
  auto eng = make_engine(seed, 0xCA11B);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::VectorXd log_failure(mc), u(mc);
  for (int i = 0; i < mc; ++i) {
    log_failure[i] = sampler.draw(eng).log_failure;
    u[i] = unif(eng);
  }
  auto censor_rate = [&](double shift) {
    int censored = 0;
    for (int i = 0; i < mc; ++i) censored += log_failure[i] > shift + cfg.censor_window * u[i];
    return static_cast<double>(censored) / mc;
  };

  double lo = -30.0 - cfg.censor_window, hi = 50.0;  // rate is nonincreasing in the shift
  if (censor_rate(lo) < cfg.target_cr || censor_rate(hi) > cfg.target_cr)
    throw std::runtime_error("calibrate_censoring: target rate unreachable in bracket");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double cr = censor_rate(mid);
    if (std::abs(cr - cfg.target_cr) <= 0.005) return {mid, mid + cfg.censor_window};
    (cr > cfg.target_cr ? lo : hi) = mid;
    if (hi - lo < 1e-12) break;
  }
  throw std::runtime_error("calibrate_censoring: bisection did not reach the target rate");
}

std::pair<Dataset, GroundTruth> generate(const SimulationConfig& cfg, double t0, double t1,
                                         std::uint64_t seed) {
  cfg.validate();
  if (!(t1 > t0)) throw std::invalid_argument("generate: censoring bounds must satisfy t0 < t1");
  const DgpSampler sampler(cfg);
  auto eng = make_engine(seed, 0x6E11);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Eigen::VectorXd time(cfg.n);
  Eigen::VectorXi status(cfg.n), treat(cfg.n), source(cfg.n);
  Eigen::MatrixXd x(cfg.n, cfg.p);
  for (int i = 0; i < cfg.n; ++i) {
    const auto row = sampler.draw(eng);
    const double log_censor = t0 + (t1 - t0) * unif(eng);
    status[i] = row.log_failure <= log_censor ? 1 : 0;
    time[i] = std::max(std::exp(std::min(row.log_failure, log_censor)), 1e-300);
    treat[i] = row.a;
    source[i] = row.s;
    x.row(i) = row.x.transpose();
  }
  GroundTruth truth{cfg.alpha_star(), cfg.beta_star(), cfg.confounded};
  return {Dataset(std::move(time), std::move(status), std::move(treat), std::move(source),
                  std::move(x)),
          std::move(truth)};
}

Metrics compute_metrics(const Eigen::MatrixXd& alphas, const std::vector<int>& verdicts,
                        const GroundTruth& truth) {
  const int b = static_cast<int>(alphas.rows());
  const int p = static_cast<int>(alphas.cols());
  if (b == 0) throw std::invalid_argument("compute_metrics: no replicates");
  if (p != truth.alpha.size()) throw std::invalid_argument("compute_metrics: dimension mismatch");

  Metrics m;
  double sse = 0.0, fdr_sum = 0.0;
  int tir_count = 0, tir_hits = 0;
  for (int r = 0; r < b; ++r) {
    int false_disc = 0, disc = 0;
    for (int j = 0; j < p; ++j) {
      const double err = alphas(r, j) - truth.alpha[j];
      sse += err * err;
      if (alphas(r, j) != 0.0) {
        ++disc;
        if (truth.alpha[j] == 0.0) ++false_disc;
      }
    }
    fdr_sum += disc > 0 ? static_cast<double>(false_disc) / disc : 0.0;
    if (r < static_cast<int>(verdicts.size()) && verdicts[r] >= 0) {
      ++tir_count;
      tir_hits += (verdicts[r] == 1) == truth.confounded;
    }
  }
  m.rmse = std::sqrt(sse / (static_cast<double>(b) * p));
  m.fdr = fdr_sum / b;
  if (tir_count > 0) m.tir = static_cast<double>(tir_hits) / tir_count;

  m.bias = alphas.colwise().mean().transpose() - truth.alpha;
  m.sd.resize(p);
  for (int j = 0; j < p; ++j) {
    const double mean = alphas.col(j).mean();
    m.sd[j] = b > 1 ? std::sqrt((alphas.col(j).array() - mean).square().sum() / (b - 1)) : 0.0;
  }
  return m;
}

NuisanceConfig StudySpec::default_nuisance() {
  NuisanceConfig cfg;
  cfg.k_folds = 5;
  cfg.propensity_mode = PropensityMode::PenalizedLogistic;
  return cfg;
}

NuisanceConfig StudySpec::default_baseline_nuisance() {
  NuisanceConfig cfg;
  cfg.k_folds = 2;
  cfg.interact_source = false;
  return cfg;
}

namespace {

struct ReplicateOutcome {
  // per estimator slot
  std::vector<Eigen::VectorXd> alpha;
  std::vector<int> verdict;
  std::vector<bool> ok;
  std::vector<bool> converged;
  std::vector<bool> monotone;
  std::vector<double> kkt;
  std::vector<std::string> error;
  std::vector<Eigen::VectorXd> se;        // covariate part; empty when no bootstrap
  std::vector<Eigen::VectorXd> covered;   // 1/0 per covariate
  std::vector<std::vector<int>> beta_support;
  double censor_rate = 0.0;
};

}  // namespace

StudyReport run_study(const StudySpec& study, std::uint64_t seed, const ReplicateSink& sink) {
  const auto start = std::chrono::steady_clock::now();
  study.config.validate();
  if (study.replications < 1) throw std::invalid_argument("run_study: replications must be >= 1");
  if (study.estimators.empty()) throw std::invalid_argument("run_study: no estimators requested");

  const auto [t0, t1] =
      calibrate_censoring(study.config, study.calibration_draws, derive_seed(seed, 0xCA1));
  const int B = study.replications;
  const int ne = static_cast<int>(study.estimators.size());
  const int p = study.config.p;
  const GroundTruth truth{study.config.alpha_star(), study.config.beta_star(),
                          study.config.confounded};

  std::vector<ReplicateOutcome> outcomes(B);

  auto run_replicate = [&](int b) {
    ReplicateOutcome& out = outcomes[b];
    out.alpha.resize(ne);
    out.verdict.assign(ne, -1);
    out.ok.assign(ne, false);
    out.converged.assign(ne, true);
    out.monotone.assign(ne, true);
    out.kkt.assign(ne, 0.0);
    out.error.resize(ne);
    out.se.resize(ne);
    out.covered.resize(ne);
    out.beta_support.resize(ne);

    const std::uint64_t seed_b = derive_seed(seed, 0xB0000 + b);
    const auto [data, rep_truth] = generate(study.config, t0, t1, derive_seed(seed_b, 0));
    out.censor_rate =
        1.0 - static_cast<double>(data.status().sum()) / static_cast<double>(data.n());

    auto self_contained = [](EstimatorKind k) {
      return k == EstimatorKind::Rl || k == EstimatorKind::Naive || k == EstimatorKind::Rct;
    };
    bool need_shared_nf = false;
    for (const auto& e : study.estimators) need_shared_nf |= !self_contained(e.kind);
    NuisanceFit shared_nf;
    std::string shared_nf_error;
    if (need_shared_nf) {
      try {
        shared_nf = cross_fit(data, study.baseline_nuisance, derive_seed(seed_b, 1));
      } catch (const std::exception& ex) {
        shared_nf_error = ex.what();
      }
    }

    for (int ei = 0; ei < ne; ++ei) {
      const EstimatorSpec& espec = study.estimators[ei];
      const std::uint64_t seed_e = derive_seed(seed_b, 100 + ei);
      try {
        PipelineConfig pc;
        pc.kind = espec.kind;
        pc.fit = study.fit;
        pc.fit.tuning = espec.tuning;
        pc.nuisance = study.nuisance;

        FitResult fr;
        if (espec.kind == EstimatorKind::Rct) {
          // RCT-only analysis: randomization probability known by design
          pc.nuisance = rct_pipeline_nuisance(study.nuisance);
          pc.nuisance.known_e1 = study.config.pr_a;
          pc.fit.penalty.standardized_scale = true;
          fr = fit_pipeline(data, pc, seed_e);
        } else if (self_contained(espec.kind)) {
          fr = fit_pipeline(data, pc, seed_e);
        } else {
          if (!shared_nf_error.empty()) throw DataError(shared_nf_error);
          fr = fit_baseline({espec.kind, espec.tuning}, data, shared_nf, pc.fit.penalty, seed_e,
                            &pc.fit);
        }
        out.alpha[ei] = fr.coefficients.alpha.tail(p);
        out.beta_support[ei] = fr.support_beta;
        out.verdict[ei] = fr.coefficients.beta.size() > 0 ? (fr.confounded ? 1 : 0) : -1;
        out.converged[ei] = fr.coefficients.converged;
        out.monotone[ei] = fr.coefficients.objective_monotone;
        out.kkt[ei] = fr.coefficients.kkt;
        out.ok[ei] = true;

        if (study.bootstrap_draws > 0) {
          const BootstrapResult boot = bootstrap_se(data, pc, study.bootstrap_draws, study.level,
                                                    derive_seed(seed_e, 0xB), &fr);
          out.se[ei] = boot.se.segment(1, p);
          Eigen::VectorXd cov(p);
          for (int j = 0; j < p; ++j) {
            cov[j] = (boot.ci_lower[1 + j] <= truth.alpha[j] &&
                      truth.alpha[j] <= boot.ci_upper[1 + j])
                         ? 1.0
                         : 0.0;
          }
          out.covered[ei] = cov;
        }
      } catch (const std::exception& ex) {
        out.ok[ei] = false;
        out.error[ei] = ex.what();
      }
    }
  };

  int n_threads = study.threads > 0 ? study.threads
                                    : static_cast<int>(std::thread::hardware_concurrency());
  n_threads = std::clamp(n_threads, 1, B);
  if (n_threads == 1) {
    for (int b = 0; b < B; ++b) run_replicate(b);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) {
      pool.emplace_back([&] {
        for (int b = next.fetch_add(1); b < B; b = next.fetch_add(1)) run_replicate(b);
      });
    }
    for (auto& th : pool) th.join();
  }

  if (sink) {
    for (int b = 0; b < B; ++b) {
      for (int ei = 0; ei < ne; ++ei) {
        ReplicateRecord rec;
        rec.replicate = b;
        rec.estimator = study.estimators[ei].label();
        if (outcomes[b].ok[ei]) {
          rec.alpha = outcomes[b].alpha[ei];
          rec.beta_support = outcomes[b].beta_support[ei];
          rec.verdict = outcomes[b].verdict[ei];
          rec.converged = outcomes[b].converged[ei];
          rec.kkt = outcomes[b].kkt[ei];
        } else {
          rec.error = outcomes[b].error[ei];
        }
        sink(rec);
      }
    }
  }

  StudyReport report;
  report.config = study.config;
  report.replications = B;
  report.bootstrap_draws = study.bootstrap_draws;
  report.t0 = t0;
  report.t1 = t1;
  double cr = 0.0;
  for (const auto& o : outcomes) cr += o.censor_rate;
  report.achieved_cr = cr / B;

  for (int ei = 0; ei < ne; ++ei) {
    EstimatorReport er;
    er.name = study.estimators[ei].label();
    std::vector<int> good;
    for (int b = 0; b < B; ++b)
      if (outcomes[b].ok[ei]) good.push_back(b);
    er.fitted = static_cast<int>(good.size());
    er.failures = B - er.fitted;
    if (!good.empty()) {
      Eigen::MatrixXd alphas(good.size(), p);
      std::vector<int> verdicts(good.size());
      for (std::size_t g = 0; g < good.size(); ++g) {
        alphas.row(g) = outcomes[good[g]].alpha[ei].transpose();
        verdicts[g] = outcomes[good[g]].verdict[ei];
        er.max_kkt = std::max(er.max_kkt, outcomes[good[g]].kkt[ei]);
        er.all_converged = er.all_converged && outcomes[good[g]].converged[ei];
        er.objective_monotone = er.objective_monotone && outcomes[good[g]].monotone[ei];
      }
      er.metrics = compute_metrics(alphas, verdicts, truth);
      if (study.bootstrap_draws > 0) {
        er.se_mean = Eigen::VectorXd::Zero(p);
        er.coverage = Eigen::VectorXd::Zero(p);
        for (int b : good) {
          er.se_mean += outcomes[b].se[ei];
          er.coverage += outcomes[b].covered[ei];
        }
        er.se_mean /= static_cast<double>(good.size());
        er.coverage /= static_cast<double>(good.size());
      }
    }
    report.estimators.push_back(std::move(er));
  }
  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace htefuse
