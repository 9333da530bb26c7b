#include "mixface/gradients.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>
#include <vector>

#include "mixface/error.hpp"

namespace mixface {

namespace {

const ClassWeightMatrix& require_weights(LossKind kind, const ClassWeightMatrix* weights) {
  if (weights == nullptr) {
    throw Error(Errc::InvalidConfig,
                std::string(to_string(kind)) + " needs a class weight matrix");
  }
  return *weights;
}

MarginKind margin_kind_of(LossKind kind) {
  switch (kind) {
    case LossKind::CosFace: return MarginKind::AdditiveCosine;
    case LossKind::ArcFace:
    case LossKind::MixFace: return MarginKind::AdditiveAngle;
    default: return MarginKind::None;
  }
}

double logistic(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// d(target_logit)/d(cos) for each margin variant. Zero outside the arccos
// clamp window, where the angular logit is constant.
double target_logit_slope(double c, double s, double m, MarginKind kind) {
  if (kind != MarginKind::AdditiveAngle) return s;
  if (!inside_arccos_clamp(c)) return 0.0;
  const double theta = std::acos(c);
  return s * std::sin(theta + m) / std::sin(theta);
}

// Pulls a gradient w.r.t. unit rows back to the raw rows: (g - u (u.g)) / |v|.
Matrix project_through_normalization(const Matrix& grad_unit, const Matrix& unit,
                                     const Vector& norms) {
  const Vector radial = (grad_unit.cwiseProduct(unit)).rowwise().sum();
  Matrix out = grad_unit - radial.asDiagonal() * unit;
  return norms.cwiseInverse().asDiagonal() * out;
}

struct ClassificationGrads {
  Matrix embeddings;
  Matrix weights;
};

ClassificationGrads softmax_grads(const EmbeddingBatch& batch, const ClassWeightMatrix& weights) {
  const Matrix logits = batch.vectors * weights.weights.transpose();
  Matrix g(logits.rows(), logits.cols());
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double hi = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - hi).exp().matrix();
    g.row(i) = e / e.sum();
    g(i, batch.labels[static_cast<std::size_t>(i)]) -= 1.0;
  }
  g *= inv_n;
  return {g * weights.weights, g.transpose() * batch.vectors};
}

ClassificationGrads cosine_softmax_grads(const EmbeddingBatch& batch,
                                         const ClassWeightMatrix& weights, double s, double m,
                                         MarginKind kind) {
  const Vector x_norms = row_norms(batch.vectors);
  const Vector w_norms = row_norms(weights.weights);
  const Matrix xn = x_norms.cwiseInverse().asDiagonal() * batch.vectors;
  const Matrix wn = w_norms.cwiseInverse().asDiagonal() * weights.weights;
  const Matrix cos = (xn * wn.transpose()).cwiseMax(-1.0).cwiseMin(1.0);

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  Matrix grad_cos(cos.rows(), cos.cols());
  for (Eigen::Index i = 0; i < cos.rows(); ++i) {
    const int y = batch.labels[static_cast<std::size_t>(i)];
    Eigen::RowVectorXd z = s * cos.row(i);
    z(y) = target_logit(cos(i, y), s, m, kind);
    const double hi = z.maxCoeff();
    Eigen::RowVectorXd p = (z.array() - hi).exp().matrix();
    p /= p.sum();
    p(y) -= 1.0;
    grad_cos.row(i) = (s * inv_n) * p;
    grad_cos(i, y) = inv_n * p(y) * target_logit_slope(cos(i, y), s, m, kind);
  }
  return {project_through_normalization(grad_cos * wn, xn, x_norms),
          project_through_normalization(grad_cos.transpose() * xn, wn, w_norms)};
}

// dL/dS for the pair loss over the strict upper triangle of `sim`.
Matrix pair_loss_grad_similarity(const Matrix& sim, std::span<const int> labels, double scale) {
  const auto n = sim.rows();
  std::vector<double> scaled_neg;
  std::size_t num_pos = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)]) {
        ++num_pos;
      } else {
        scaled_neg.push_back(scale * sim(i, j));
      }
    }
  }
  if (num_pos == 0) throw Error(Errc::NoPositives, "batch has no positive pairs");
  if (scaled_neg.empty()) throw Error(Errc::NoNegatives, "batch has no negative pairs");
  const double lse_neg = log_sum_exp(scaled_neg);
  const double inv_k = 1.0 / static_cast<double>(num_pos);

  // Each positive k contributes -s*sigma_k to itself and
  // s*sigma_k*exp(s*n_l - lse) to every negative l.
  Matrix g = Matrix::Zero(n, n);
  double sigma_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (labels[static_cast<std::size_t>(i)] != labels[static_cast<std::size_t>(j)]) continue;
      const double sigma = logistic(lse_neg - scale * sim(i, j));
      g(i, j) = -scale * inv_k * sigma;
      sigma_sum += sigma;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)]) continue;
      g(i, j) = scale * inv_k * sigma_sum * std::exp(scale * sim(i, j) - lse_neg);
    }
  }
  return g;
}

Matrix sn_pair_grads(const EmbeddingBatch& batch, double s2) {
  const Vector norms = row_norms(batch.vectors);
  const Matrix xn = norms.cwiseInverse().asDiagonal() * batch.vectors;
  const Matrix sim = (xn * xn.transpose()).cwiseMax(-1.0).cwiseMin(1.0);
  const Matrix g = pair_loss_grad_similarity(sim, batch.labels, s2);
  const Matrix g_sym = g + g.transpose();
  return project_through_normalization(g_sym * xn, xn, norms);
}

Matrix n_pair_grads(const EmbeddingBatch& batch) {
  const Matrix gram = batch.vectors * batch.vectors.transpose();
  const Matrix g = pair_loss_grad_similarity(gram, batch.labels, 1.0);
  return (g + g.transpose()) * batch.vectors;
}

}  // namespace

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::Softmax: return "softmax";
    case LossKind::NormSoftmax: return "normsoftmax";
    case LossKind::CosFace: return "cosface";
    case LossKind::ArcFace: return "arcface";
    case LossKind::NPair: return "npair";
    case LossKind::SNPair: return "snpair";
    case LossKind::MixFace: return "mixface";
  }
  return "unknown";
}

LossKind parse_loss_kind(std::string_view name) {
  std::string key;
  for (char c : name) {
    if (c == '-' || c == '_') continue;
    key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  for (LossKind kind : kAllLossKinds) {
    if (key == to_string(kind)) return kind;
  }
  if (key == "fixcos") return LossKind::NormSoftmax;
  throw Error(Errc::InvalidConfig, "unknown loss '" + std::string(name) + "'");
}

bool uses_class_weights(LossKind kind) {
  return kind != LossKind::NPair && kind != LossKind::SNPair;
}

bool uses_pairs(LossKind kind) {
  return kind == LossKind::NPair || kind == LossKind::SNPair || kind == LossKind::MixFace;
}

double evaluate_loss(LossKind kind, const EmbeddingBatch& batch, const ClassWeightMatrix* weights,
                     const MarginConfig& cfg) {
  switch (kind) {
    case LossKind::Softmax: return softmax_loss(batch, require_weights(kind, weights));
    case LossKind::NormSoftmax:
      return cosine_softmax_loss(batch, require_weights(kind, weights), cfg.s1, 0.0,
                                 MarginKind::None);
    case LossKind::CosFace:
    case LossKind::ArcFace:
      return cosine_softmax_loss(batch, require_weights(kind, weights), cfg.s1, cfg.m,
                                 margin_kind_of(kind));
    case LossKind::NPair: return n_pair_loss(batch);
    case LossKind::SNPair: return sn_pair_loss(batch, cfg.s2);
    case LossKind::MixFace: return mixface_loss(batch, require_weights(kind, weights), cfg);
  }
  throw Error(Errc::InvalidConfig, "unhandled loss kind");
}

LossResult backward(LossKind kind, const EmbeddingBatch& batch, const ClassWeightMatrix* weights,
                    const MarginConfig& cfg) {
  LossResult out;
  out.value = evaluate_loss(kind, batch, weights, cfg);
  switch (kind) {
    case LossKind::Softmax: {
      auto g = softmax_grads(batch, *weights);
      out.grad_embeddings = std::move(g.embeddings);
      out.grad_weights = std::move(g.weights);
      break;
    }
    case LossKind::NormSoftmax:
    case LossKind::CosFace:
    case LossKind::ArcFace: {
      const double m = kind == LossKind::NormSoftmax ? 0.0 : cfg.m;
      auto g = cosine_softmax_grads(batch, *weights, cfg.s1, m, margin_kind_of(kind));
      out.grad_embeddings = std::move(g.embeddings);
      out.grad_weights = std::move(g.weights);
      break;
    }
    case LossKind::NPair: out.grad_embeddings = n_pair_grads(batch); break;
    case LossKind::SNPair: out.grad_embeddings = sn_pair_grads(batch, cfg.s2); break;
    case LossKind::MixFace: {
      auto g = cosine_softmax_grads(batch, *weights, cfg.s1, cfg.m, MarginKind::AdditiveAngle);
      out.grad_embeddings = g.embeddings + sn_pair_grads(batch, cfg.s2);
      out.grad_weights = std::move(g.weights);
      break;
    }
  }
  return out;
}

bool near_clamp_boundary(LossKind kind, const EmbeddingBatch& batch,
                         const ClassWeightMatrix* weights, double tol) {
  auto touches = [tol](const Matrix& c) { return (c.array().abs() > 1.0 - tol).any(); };
  if (kind == LossKind::Softmax || kind == LossKind::NPair) return false;
  if (uses_class_weights(kind) && weights != nullptr &&
      touches(cosine_matrix(batch.vectors, weights->weights))) {
    return true;
  }
  if (uses_pairs(kind)) {
    Matrix sim = cosine_matrix(batch.vectors, batch.vectors);
    sim.diagonal().setZero();
    if (touches(sim)) return true;
  }
  return false;
}

double max_relative_error(const std::function<double(std::span<const double>)>& f,
                          std::span<const double> x, std::span<const double> analytic,
                          double h_scale) {
  if (x.size() != analytic.size()) {
    throw Error(Errc::DimensionMismatch, "gradient size differs from parameter size");
  }
  std::vector<double> probe(x.begin(), x.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double h = h_scale * (1.0 + std::abs(x[i]));
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

double finite_difference_check(LossKind kind, const EmbeddingBatch& batch,
                               const ClassWeightMatrix* weights, const MarginConfig& cfg,
                               double h_scale) {
  const LossResult analytic = backward(kind, batch, weights, cfg);
  const bool with_weights = uses_class_weights(kind);
  const auto n_emb = static_cast<std::size_t>(batch.vectors.size());
  const std::size_t n_w = with_weights ? static_cast<std::size_t>(weights->weights.size()) : 0;

  std::vector<double> x(n_emb + n_w);
  std::vector<double> grad(n_emb + n_w);
  std::copy_n(batch.vectors.data(), n_emb, x.begin());
  std::copy_n(analytic.grad_embeddings.data(), n_emb, grad.begin());
  if (with_weights) {
    std::copy_n(weights->weights.data(), n_w, x.begin() + static_cast<std::ptrdiff_t>(n_emb));
    std::copy_n(analytic.grad_weights->data(), n_w, grad.begin() + static_cast<std::ptrdiff_t>(n_emb));
  }

  EmbeddingBatch probe_batch = batch;
  ClassWeightMatrix probe_weights = with_weights ? *weights : ClassWeightMatrix{};
  auto f = [&](std::span<const double> params) {
    std::copy_n(params.begin(), n_emb, probe_batch.vectors.data());
    if (with_weights) std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(n_emb), n_w,
                                  probe_weights.weights.data());
    try {
      return evaluate_loss(kind, probe_batch, with_weights ? &probe_weights : nullptr, cfg);
    } catch (const Error& e) {
      throw Error(Errc::PerturbationOutOfDomain, e.what());
    }
  };
  return max_relative_error(f, x, grad, h_scale);
}

}  // namespace mixface
