// SPDX-License-Identifier: Apache-2.0
#include "gdistill/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>

#include "gdistill/error.hpp"

namespace gdistill {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void check_rows(const Matrix& z, std::span<const double> t) {
  require(static_cast<std::size_t>(z.rows()) == t.size(),
          "time vector length does not match batch size");
}

}  // namespace

DenoiserOutput v_to_outputs(const Matrix& z, std::span<const double> t, const Matrix& v_hat,
                            const NoiseSchedule& schedule) {
  check_rows(z, t);
  require(z.rows() == v_hat.rows() && z.cols() == v_hat.cols(), "v_hat shape mismatch");
  DenoiserOutput out{Matrix(z.rows(), z.cols()), Matrix(z.rows(), z.cols()), v_hat};
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const auto [alpha, sigma] = schedule.alpha_sigma(t[static_cast<std::size_t>(i)]);
    out.x_hat.row(i) = alpha * z.row(i) - sigma * v_hat.row(i);
    out.eps_hat.row(i) = sigma * z.row(i) + alpha * v_hat.row(i);
  }
  return out;
}

DenoiserOutput outputs_from_x_eps(std::span<const double> t, Matrix x_hat, Matrix eps_hat,
                                  const NoiseSchedule& schedule) {
  check_rows(x_hat, t);
  Matrix v(x_hat.rows(), x_hat.cols());
  for (Eigen::Index i = 0; i < x_hat.rows(); ++i) {
    const auto [alpha, sigma] = schedule.alpha_sigma(t[static_cast<std::size_t>(i)]);
    v.row(i) = alpha * eps_hat.row(i) - sigma * x_hat.row(i);
  }
  return {std::move(x_hat), std::move(eps_hat), std::move(v)};
}

Matrix combine_guided(const Matrix& x_cond, const Matrix& x_uncond, std::span<const double> w) {
  require(x_cond.rows() == x_uncond.rows() && x_cond.cols() == x_uncond.cols(),
          "guided combination needs equal shapes");
  require(static_cast<std::size_t>(x_cond.rows()) == w.size(), "one w per row required");
  Matrix out(x_cond.rows(), x_cond.cols());
  for (Eigen::Index i = 0; i < x_cond.rows(); ++i) {
    const double wi = w[static_cast<std::size_t>(i)];
    out.row(i) = (1.0 + wi) * x_cond.row(i) - wi * x_uncond.row(i);
  }
  return out;
}

Vector combine_guided(const Vector& x_cond, const Vector& x_uncond, double w) {
  require(x_cond.size() == x_uncond.size(), "guided combination needs equal sizes");
  return (1.0 + w) * x_cond - w * x_uncond;
}

Matrix fourier_embedding(std::span<const double> u, std::size_t dim, double max_freq) {
  require(dim >= 2 && dim % 2 == 0, "embedding dimension must be even and positive");
  const std::size_t freqs = dim / 2;
  std::vector<double> f(freqs, 1.0);
  for (std::size_t j = 1; j < freqs; ++j) {
    f[j] = std::pow(max_freq, static_cast<double>(j) / static_cast<double>(freqs - 1));
  }
  Matrix out(static_cast<Eigen::Index>(u.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < u.size(); ++i) {
    for (std::size_t j = 0; j < freqs; ++j) {
      const double angle = kTwoPi * f[j] * u[i];
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(2 * j)) = std::sin(angle);
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(2 * j + 1)) = std::cos(angle);
    }
  }
  return out;
}

Matrix embed_w(std::span<const double> w, std::size_t dim, double w_min, double w_max,
               std::size_t* clamped) {
  require(w_max >= w_min, "w interval is inverted");
  std::vector<double> u(w.size());
  std::size_t n_clamped = 0;
  const double width = w_max - w_min;
  for (std::size_t i = 0; i < w.size(); ++i) {
    double wi = w[i];
    if (wi < w_min || wi > w_max) {
      wi = std::clamp(wi, w_min, w_max);
      ++n_clamped;
    }
    u[i] = width > 0.0 ? (wi - w_min) / width : 0.0;
  }
  if (clamped) *clamped += n_clamped;
  return fourier_embedding(u, dim, 64.0);
}

// ------------------------------------------------------------------ Denoiser

DenoiserOutput Denoiser::eval(const Matrix& z, std::span<const double> t,
                              const Conditioning& cond) const {
  require(static_cast<std::size_t>(z.cols()) == dim(), "state dimension mismatch");
  check_rows(z, t);
  const auto n = t.size();
  if (class_count() > 0) {
    require(cond.labels.size() == n, kind() + " is class-conditional and needs one label per row");
    const int limit = static_cast<int>(class_count()) + (has_null_class() ? 1 : 0);
    for (int label : cond.labels) {
      require(label >= 0 && label < limit, "class label out of range");
    }
  } else {
    require(cond.labels.empty(), kind() + " is unconditional but labels were supplied");
  }
  if (w_conditioned()) {
    require(cond.w.size() == n, kind() + " is w-conditioned and needs one w per row");
  } else {
    require(cond.w.empty(), kind() + " is not w-conditioned but w was supplied");
  }
  for (double ti : t) {
    require(ti >= 0.0 && ti <= 1.0, "denoiser time outside [0, 1]");
  }
  evaluations_ += n * static_cast<std::uint64_t>(evaluations_per_call());
  return predict(z, t, cond);
}

// ------------------------------------------------------------------- GmmSpec

GmmSpec::GmmSpec(std::vector<GmmComponent> components) : components_(std::move(components)) {
  require(!components_.empty(), "a mixture needs at least one component");
  dim_ = static_cast<std::size_t>(components_.front().mean.size());
  require(dim_ > 0, "mixture dimension must be positive");
  double total = 0.0;
  int max_label = 0;
  for (const auto& c : components_) {
    require(static_cast<std::size_t>(c.mean.size()) == dim_, "mixture components differ in dimension");
    require(c.scale >= 0.0 && std::isfinite(c.scale), "component scale must be finite and >= 0");
    require(c.weight > 0.0 && std::isfinite(c.weight), "component weight must be positive");
    require(c.label >= 0, "component label must be >= 0");
    total += c.weight;
    max_label = std::max(max_label, c.label);
  }
  for (auto& c : components_) c.weight /= total;
  class_count_ = static_cast<std::size_t>(max_label) + 1;
  for (std::size_t k = 0; k < class_count_; ++k) {
    const bool present = std::any_of(components_.begin(), components_.end(), [&](const auto& c) {
      return c.label == static_cast<int>(k);
    });
    require(present, "class labels must be contiguous from 0");
  }
}

GmmSpec GmmSpec::for_class(int label) const {
  std::vector<GmmComponent> sub;
  for (const auto& c : components_) {
    if (c.label == label) {
      sub.push_back(c);
      sub.back().label = 0;
    }
  }
  require(!sub.empty(), "no components with label " + std::to_string(label));
  return GmmSpec(std::move(sub));
}

GmmSpec GmmSpec::shifted(const Vector& offset) const {
  require(static_cast<std::size_t>(offset.size()) == dim_, "shift dimension mismatch");
  auto moved = components_;
  for (auto& c : moved) c.mean += offset;
  return GmmSpec(std::move(moved));
}

Vector GmmSpec::mean() const {
  Vector m = Vector::Zero(static_cast<Eigen::Index>(dim_));
  for (const auto& c : components_) m += c.weight * c.mean;
  return m;
}

Matrix GmmSpec::covariance() const {
  const Vector m = mean();
  const auto d = static_cast<Eigen::Index>(dim_);
  Matrix cov = Matrix::Zero(d, d);
  for (const auto& c : components_) {
    const Vector dm = c.mean - m;
    cov += c.weight * (dm * dm.transpose() + c.scale * c.scale * Matrix::Identity(d, d));
  }
  return cov;
}

std::vector<double> GmmSpec::class_weights() const {
  std::vector<double> w(class_count_, 0.0);
  for (const auto& c : components_) w[static_cast<std::size_t>(c.label)] += c.weight;
  return w;
}

GmmSpec::Draw GmmSpec::sample(std::size_t n, std::mt19937_64& rng) const {
  std::vector<double> weights;
  for (const auto& c : components_) weights.push_back(c.weight);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::normal_distribution<double> normal;
  Draw draw{Matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim_)), {}};
  draw.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = components_[pick(rng)];
    draw.labels[i] = c.label;
    for (std::size_t j = 0; j < dim_; ++j) {
      draw.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          c.mean(static_cast<Eigen::Index>(j)) + c.scale * normal(rng);
    }
  }
  return draw;
}

Matrix GmmSpec::sample_given_labels(std::span<const int> labels, std::mt19937_64& rng) const {
  std::vector<std::discrete_distribution<std::size_t>> per_class;
  std::vector<std::vector<std::size_t>> members(class_count_);
  for (std::size_t k = 0; k < components_.size(); ++k) {
    members[static_cast<std::size_t>(components_[k].label)].push_back(k);
  }
  for (const auto& idx : members) {
    std::vector<double> w;
    for (auto k : idx) w.push_back(components_[k].weight);
    per_class.emplace_back(w.begin(), w.end());
  }
  std::normal_distribution<double> normal;
  Matrix x(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(dim_));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto label = static_cast<std::size_t>(labels[i]);
    require(label < class_count_, "label out of range for mixture");
    const auto& c = components_[members[label][per_class[label](rng)]];
    for (std::size_t j = 0; j < dim_; ++j) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          c.mean(static_cast<Eigen::Index>(j)) + c.scale * normal(rng);
    }
  }
  return x;
}

// ------------------------------------------------------------------- oracles

namespace {

struct ClampedTime {
  std::vector<double> t;
  std::uint64_t clamped = 0;
};

ClampedTime clamp_oracle_times(std::span<const double> t) {
  ClampedTime out{std::vector<double>(t.begin(), t.end())};
  for (double& ti : out.t) {
    if (ti < kOracleTimeMin || ti > kOracleTimeMax) {
      ti = std::clamp(ti, kOracleTimeMin, kOracleTimeMax);
      ++out.clamped;
    }
  }
  return out;
}

// Posterior of one isotropic component at (alpha, sigma): mean and noise
// estimate written into x_row / eps_row.
template <typename Row, typename Out>
void component_posterior(const Row& z, const Vector& mean, double scale, double alpha,
                         double sigma, Out& x_row, Out& eps_row) {
  const double s2 = scale * scale;
  const double var = alpha * alpha * s2 + sigma * sigma;
  const Eigen::RowVectorXd d = z - alpha * mean.transpose();
  x_row = mean.transpose() + (alpha * s2 / var) * d;
  eps_row = (sigma / var) * d;
}

}  // namespace

GaussianOracle::GaussianOracle(Vector mean, double scale, NoiseSchedule schedule)
    : mean_(std::move(mean)), scale_(scale), schedule_(schedule) {
  require(mean_.size() > 0, "oracle dimension must be positive");
  require(scale_ >= 0.0, "oracle scale must be >= 0");
}

DenoiserOutput GaussianOracle::predict(const Matrix& z, std::span<const double> t,
                                       const Conditioning&) const {
  const auto times = clamp_oracle_times(t);
  note_clamps(times.clamped);
  Matrix x(z.rows(), z.cols());
  Matrix eps(z.rows(), z.cols());
  Eigen::RowVectorXd xr(z.cols());
  Eigen::RowVectorXd er(z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const auto [alpha, sigma] = schedule_.alpha_sigma(times.t[static_cast<std::size_t>(i)]);
    component_posterior(z.row(i), mean_, scale_, alpha, sigma, xr, er);
    x.row(i) = xr;
    eps.row(i) = er;
  }
  return outputs_from_x_eps(times.t, std::move(x), std::move(eps), schedule_);
}

GmmOracle::GmmOracle(GmmSpec spec, bool class_conditional, NoiseSchedule schedule)
    : spec_(std::move(spec)), conditional_(class_conditional), schedule_(schedule) {}

DenoiserOutput GmmOracle::predict(const Matrix& z, std::span<const double> t,
                                  const Conditioning& cond) const {
  const auto times = clamp_oracle_times(t);
  note_clamps(times.clamped);
  const auto& comps = spec_.components();
  const std::size_t K = comps.size();
  const double d = static_cast<double>(spec_.dim());
  const int null_label = static_cast<int>(spec_.class_count());

  Matrix x = Matrix::Zero(z.rows(), z.cols());
  Matrix eps = Matrix::Zero(z.rows(), z.cols());
  std::vector<double> logp(K);
  std::vector<Eigen::RowVectorXd> xk(K, Eigen::RowVectorXd(z.cols()));
  std::vector<Eigen::RowVectorXd> ek(K, Eigen::RowVectorXd(z.cols()));

  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const auto [alpha, sigma] = schedule_.alpha_sigma(times.t[static_cast<std::size_t>(i)]);
    const int label = conditional_ ? cond.labels[static_cast<std::size_t>(i)] : null_label;
    double class_total = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      if (label == null_label || comps[k].label == label) class_total += comps[k].weight;
    }
    double max_logp = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) {
      const auto& c = comps[k];
      if (label != null_label && c.label != label) {
        logp[k] = -std::numeric_limits<double>::infinity();
        continue;
      }
      const double var = alpha * alpha * c.scale * c.scale + sigma * sigma;
      const double sq = (z.row(i) - alpha * c.mean.transpose()).squaredNorm();
      logp[k] = std::log(c.weight / class_total) - 0.5 * sq / var - 0.5 * d * std::log(var);
      max_logp = std::max(max_logp, logp[k]);
      component_posterior(z.row(i), c.mean, c.scale, alpha, sigma, xk[k], ek[k]);
    }
    double norm = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      logp[k] = std::exp(logp[k] - max_logp);
      norm += logp[k];
    }
    for (std::size_t k = 0; k < K; ++k) {
      if (logp[k] == 0.0) continue;
      const double r = logp[k] / norm;
      x.row(i) += r * xk[k];
      eps.row(i) += r * ek[k];
    }
  }
  return outputs_from_x_eps(times.t, std::move(x), std::move(eps), schedule_);
}

// ------------------------------------------------------------------- MlpSpec

std::string MlpSpec::canonical() const {
  std::ostringstream out;
  out.precision(17);
  out << "dim=" << dim << ";hidden=" << hidden << ";layers=" << layers
      << ";time_embed_dim=" << time_embed_dim << ";time_max_freq=" << time_max_freq
      << ";class_count=" << class_count << ";null_class=" << null_class
      << ";class_embed_dim=" << class_embed_dim << ";w_conditioned=" << w_conditioned
      << ";w_embed_dim=" << w_embed_dim << ";w_min=" << w_min << ";w_max=" << w_max;
  return out.str();
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string MlpSpec::fingerprint() const { return fnv1a_hex(canonical()); }

MlpSpec MlpSpec::with_w_conditioning(double lo, double hi) const {
  MlpSpec s = *this;
  s.w_conditioned = true;
  s.w_min = lo;
  s.w_max = hi;
  return s;
}

// --------------------------------------------------------------- MlpDenoiser

namespace {

void validate_spec(const MlpSpec& s) {
  require(s.dim > 0 && s.hidden > 0 && s.layers > 0, "MLP dimensions must be positive");
  require(s.time_embed_dim >= 2 && s.time_embed_dim % 2 == 0, "time embedding dim must be even");
  require(!s.w_conditioned || (s.w_embed_dim >= 2 && s.w_embed_dim % 2 == 0),
          "w embedding dim must be even");
  require(s.w_max >= s.w_min, "w interval is inverted");
  require(s.class_count > 0 || !s.null_class, "null class needs a class-conditional model");
}

std::size_t embedding_rows(const MlpSpec& s) { return s.class_count + (s.null_class ? 1 : 0); }

std::size_t trunk_input_width(const MlpSpec& s) {
  return s.dim + s.hidden + (s.class_count > 0 ? s.class_embed_dim : 0);
}

struct ParamShape {
  std::string name;
  std::size_t rows;
  std::size_t cols;
  bool bias;
};

std::vector<ParamShape> param_shapes(const MlpSpec& s) {
  std::vector<ParamShape> out;
  out.push_back({"time.dense.weight", s.time_embed_dim, s.hidden, false});
  out.push_back({"time.dense.bias", 1, s.hidden, true});
  if (s.w_conditioned) {
    out.push_back({"w.dense.weight", s.w_embed_dim, s.hidden, false});
    out.push_back({"w.dense.bias", 1, s.hidden, true});
  }
  if (s.class_count > 0) {
    out.push_back({"class.embedding", embedding_rows(s), s.class_embed_dim, false});
  }
  std::size_t in = trunk_input_width(s);
  for (std::size_t l = 0; l < s.layers; ++l) {
    out.push_back({"trunk." + std::to_string(l) + ".weight", in, s.hidden, false});
    out.push_back({"trunk." + std::to_string(l) + ".bias", 1, s.hidden, true});
    in = s.hidden;
  }
  out.push_back({"out.weight", s.hidden, s.dim, false});
  out.push_back({"out.bias", 1, s.dim, true});
  return out;
}

ad::Tensor make_param(const ParamShape& p) {
  if (p.bias) return ad::Tensor(std::vector<std::size_t>{p.cols});
  return ad::Tensor(p.rows, p.cols);
}

bool is_w_param(const std::string& name) { return name.rfind("w.", 0) == 0; }

}  // namespace

MlpDenoiser::MlpDenoiser(MlpSpec spec, NoiseSchedule schedule, std::uint64_t init_seed)
    : spec_(std::move(spec)), schedule_(schedule) {
  validate_spec(spec_);
  std::mt19937_64 rng(init_seed);
  std::normal_distribution<double> normal;
  for (const auto& p : param_shapes(spec_)) {
    ad::Tensor value = make_param(p);
    if (!p.bias && !is_w_param(p.name)) {
      if (p.name == "class.embedding") {
        for (double& v : value.data()) v = normal(rng);
      } else {
        const double limit = std::sqrt(6.0 / static_cast<double>(p.rows + p.cols));
        std::uniform_real_distribution<double> uniform(-limit, limit);
        for (double& v : value.data()) v = uniform(rng);
      }
    }
    params_.add(p.name, std::move(value));
  }
  build_graphs();
}

MlpDenoiser::MlpDenoiser(MlpSpec spec, NoiseSchedule schedule, ad::ParamStore params)
    : spec_(std::move(spec)), schedule_(schedule), params_(std::move(params)) {
  validate_spec(spec_);
  const auto shapes = param_shapes(spec_);
  require(params_.size() == shapes.size(), "parameter set does not match the model spec");
  for (const auto& p : shapes) {
    require(params_.contains(p.name), "missing parameter '" + p.name + "'");
    require(params_.value(p.name).shape() == make_param(p).shape(),
            "parameter '" + p.name + "' has the wrong shape");
  }
  build_graphs();
}

std::unique_ptr<MlpDenoiser> MlpDenoiser::clone() const {
  ad::ParamStore copy;
  for (const auto& [name, slot] : params_.slots()) copy.add(name, slot.value);
  return std::make_unique<MlpDenoiser>(spec_, schedule_, std::move(copy));
}

void MlpDenoiser::build_graphs() {
  for (ad::Graph* g : {&inference_, &training_}) {
    *g = ad::Graph();
    auto dense = [&](ad::NodeId x, const std::string& prefix) {
      return g->add_bias(g->matmul(x, g->param(prefix + ".weight")), g->param(prefix + ".bias"));
    };
    const ad::NodeId z = g->input("z");
    ad::NodeId cond = dense(g->input("temb"), "time.dense");
    if (spec_.w_conditioned) cond = g->add(cond, dense(g->input("wemb"), "w.dense"));
    cond = g->silu(cond);
    std::vector<ad::NodeId> parts{z, cond};
    if (spec_.class_count > 0) {
      parts.push_back(g->matmul(g->input("onehot"), g->param("class.embedding")));
    }
    ad::NodeId h = g->concat(parts);
    for (std::size_t l = 0; l < spec_.layers; ++l) {
      h = g->silu(dense(h, "trunk." + std::to_string(l)));
    }
    const ad::NodeId v = dense(h, "out");
    g->set_output("v", v);
    if (g == &training_) {
      const ad::NodeId x_hat =
          g->add(g->row_scale(z, g->input("alpha")), g->row_scale(v, g->input("neg_sigma")));
      g->set_output("x_hat", x_hat);
      g->set_output("loss", g->weighted_sse(x_hat, g->input("target"), g->input("weight")));
    }
  }
}

ad::Feed MlpDenoiser::make_feed(const Matrix& z, std::span<const double> t,
                                const Conditioning& cond) const {
  ad::Feed feed;
  feed.emplace("z", ad::Tensor::from_matrix(z));
  feed.emplace("temb", ad::Tensor::from_matrix(
                           fourier_embedding(t, spec_.time_embed_dim, spec_.time_max_freq)));
  if (spec_.w_conditioned) {
    std::size_t clamped = 0;
    feed.emplace("wemb", ad::Tensor::from_matrix(embed_w(cond.w, spec_.w_embed_dim, spec_.w_min,
                                                         spec_.w_max, &clamped)));
    note_clamps(clamped);
  }
  if (spec_.class_count > 0) {
    ad::Tensor onehot(t.size(), embedding_rows(spec_));
    for (std::size_t i = 0; i < t.size(); ++i) {
      onehot.matrix()(static_cast<Eigen::Index>(i), cond.labels[i]) = 1.0;
    }
    feed.emplace("onehot", std::move(onehot));
  }
  return feed;
}

DenoiserOutput MlpDenoiser::predict(const Matrix& z, std::span<const double> t,
                                    const Conditioning& cond) const {
  auto result = ad::forward(inference_, make_feed(z, t, cond), params_);
  return v_to_outputs(z, t, result.outputs.at("v").matrix(), schedule_);
}

double MlpDenoiser::loss_and_gradient(const TrainingBatch& batch) {
  const auto n = static_cast<std::size_t>(batch.z.rows());
  require(batch.t.size() == n && batch.weight.size() == n, "training batch is ragged");
  require(batch.target.rows() == batch.z.rows() && batch.target.cols() == batch.z.cols(),
          "training target shape mismatch");
  const Conditioning cond{batch.labels, batch.w};
  // Reuse eval's validation without charging the counter twice.
  if (spec_.class_count > 0) require(batch.labels.size() == n, "training batch needs labels");
  if (spec_.w_conditioned) require(batch.w.size() == n, "training batch needs w");

  ad::Feed feed = make_feed(batch.z, batch.t, cond);
  ad::Tensor alpha(n, 1);
  ad::Tensor neg_sigma(n, 1);
  ad::Tensor weight(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto [a, s] = schedule_.alpha_sigma(batch.t[i]);
    alpha.data()[i] = a;
    neg_sigma.data()[i] = -s;
    weight.data()[i] = batch.weight[i];
  }
  feed.emplace("alpha", std::move(alpha));
  feed.emplace("neg_sigma", std::move(neg_sigma));
  feed.emplace("weight", std::move(weight));
  feed.emplace("target", ad::Tensor::from_matrix(batch.target));

  params_.zero_grad();
  auto result = ad::forward(training_, feed, params_);
  ad::backward(result.tape, "loss", params_);
  return result.outputs.at("loss").data()[0];
}

std::unique_ptr<MlpDenoiser> init_student_from_teacher(const MlpDenoiser& teacher,
                                                       const MlpSpec& student_spec) {
  MlpSpec expected = teacher.spec();
  expected.w_conditioned = student_spec.w_conditioned;
  expected.w_embed_dim = student_spec.w_embed_dim;
  expected.w_min = student_spec.w_min;
  expected.w_max = student_spec.w_max;
  if (!(expected == student_spec)) {
    fail(ErrorCode::InvalidArgument,
         "student architecture differs from the teacher beyond w-conditioning");
  }
  ad::ParamStore params;
  for (const auto& p : param_shapes(student_spec)) {
    if (teacher.params().contains(p.name)) {
      const ad::Tensor& src = teacher.params().value(p.name);
      if (src.shape() != make_param(p).shape()) {
        fail(ErrorCode::InvalidArgument, "shape mismatch for shared parameter '" + p.name + "'");
      }
      params.add(p.name, src);
    } else {
      require(is_w_param(p.name), "teacher lacks non-w parameter '" + p.name + "'");
      params.add(p.name, make_param(p));
    }
  }
  for (const auto& name : teacher.params().names()) {
    require(params.contains(name), "teacher parameter '" + name + "' has no student counterpart");
  }
  return std::make_unique<MlpDenoiser>(student_spec, teacher.schedule(), std::move(params));
}

// ------------------------------------------------------------- GuidedTeacher

GuidedTeacher::GuidedTeacher(DenoiserPtr conditional, DenoiserPtr unconditional)
    : conditional_(std::move(conditional)), unconditional_(std::move(unconditional)) {
  require(conditional_ && unconditional_, "guided teacher needs two heads");
  require(conditional_->dim() == unconditional_->dim(), "guided heads differ in dimension");
  require(conditional_->class_count() > 0, "conditional head must be class-conditional");
  require(unconditional_->class_count() == 0 || unconditional_->has_null_class(),
          "unconditional head must be unconditional or expose a null class");
  require(conditional_->w_conditioned() == unconditional_->w_conditioned(),
          "guided heads must agree on w-conditioning");
  require(conditional_->schedule().kind() == unconditional_->schedule().kind(),
          "guided heads must share a schedule");
}

GuidedTeacher::GuidedTeacher(DenoiserPtr joint) : GuidedTeacher(joint, joint) {
  require(joint->has_null_class(), "a single-network guided teacher needs a null class");
}

std::pair<DenoiserOutput, DenoiserOutput> GuidedTeacher::heads(const Matrix& z,
                                                               std::span<const double> t,
                                                               const Conditioning& cond) const {
  Conditioning head_cond{cond.labels, {}};
  if (conditional_->w_conditioned()) head_cond.w = cond.w;
  DenoiserOutput c = conditional_->eval(z, t, head_cond);

  std::vector<int> null_labels;
  Conditioning uncond{};
  if (unconditional_->class_count() > 0) {
    null_labels.assign(t.size(), static_cast<int>(unconditional_->class_count()));
    uncond.labels = null_labels;
  }
  if (unconditional_->w_conditioned()) uncond.w = cond.w;
  DenoiserOutput u = unconditional_->eval(z, t, uncond);
  return {std::move(c), std::move(u)};
}

DenoiserOutput GuidedTeacher::predict(const Matrix& z, std::span<const double> t,
                                      const Conditioning& cond) const {
  for (int label : cond.labels) {
    require(label < static_cast<int>(class_count()),
            "guided sampling needs a real class label, not the null class");
  }
  auto [c, u] = heads(z, t, cond);
  return {combine_guided(c.x_hat, u.x_hat, cond.w), combine_guided(c.eps_hat, u.eps_hat, cond.w),
          combine_guided(c.v_hat, u.v_hat, cond.w)};
}

std::shared_ptr<GuidedTeacher> make_oracle_teacher(const GmmSpec& spec, NoiseSchedule schedule) {
  auto cond = std::make_shared<GmmOracle>(spec, true, schedule);
  auto uncond = std::make_shared<GmmOracle>(spec, false, schedule);
  return std::make_shared<GuidedTeacher>(cond, uncond);
}

}  // namespace gdistill
