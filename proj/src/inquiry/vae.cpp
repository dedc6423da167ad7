#include "bsoda/inquiry/vae.hpp"

#include <cmath>

#include "bsoda/core/json_io.hpp"
#include "bsoda/nn/checkpoint.hpp"

namespace bsoda {

using nn::Tensor2;
using nn::Var;

namespace {

constexpr const char* kFrozenEmbedding = "frozen.embedding";

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

Tensor2 relu_affine(const Tensor2& x, const Tensor2& w, const Tensor2& b) {
  Tensor2 h = x * w;
  h.rowwise() += b.row(0);
  return h.cwiseMax(0.0);
}

}  // namespace

Vae::Vae(std::size_t num_symptoms, std::size_t num_diseases, Tensor2 embeddings, VaeConfig config)
    : num_symptoms_(num_symptoms),
      num_diseases_(num_diseases),
      embeddings_(std::move(embeddings)),
      config_(config) {
  const auto f = static_cast<Eigen::Index>(num_features());
  if (embeddings_.rows() != f) throw ContractError("Vae: embedding table must have one row per feature");
  Rng rng(config_.seed);
  const auto k = embeddings_.cols();
  const auto h = static_cast<Eigen::Index>(config_.hidden);
  const auto l = static_cast<Eigen::Index>(config_.latent_dim);
  params_.create("expert.w1", k + 1, h, rng);
  params_.create_zero("expert.b1", 1, h);
  params_.create("expert.w2", h, h, rng);
  params_.create_zero("expert.b2", 1, h);
  params_.create("expert.w3", h, 2 * l, rng);
  params_.create_zero("expert.b3", 1, 2 * l);
  params_.create("decoder.w1", l, h, rng);
  params_.create_zero("decoder.b1", 1, h);
  params_.create("decoder.w2", h, h, rng);
  params_.create_zero("decoder.b2", 1, h);
  params_.create("decoder.w3", h, f, rng);
  params_.create_zero("decoder.b3", 1, f);
  refresh_experts();
}

namespace {

/// Row 2i + v holds [v, e_i].
Tensor2 expert_inputs(const Tensor2& embeddings) {
  const auto f = embeddings.rows();
  Tensor2 y(2 * f, embeddings.cols() + 1);
  for (Eigen::Index i = 0; i < f; ++i) {
    for (int v = 0; v < 2; ++v) {
      y(2 * i + v, 0) = v;
      y.block(2 * i + v, 1, 1, embeddings.cols()) = embeddings.row(i);
    }
  }
  return y;
}

}  // namespace

void Vae::refresh_experts() {
  const Tensor2 y = expert_inputs(embeddings_);
  Tensor2 h = relu_affine(y, params_.value("expert.w1"), params_.value("expert.b1"));
  h = relu_affine(h, params_.value("expert.w2"), params_.value("expert.b2"));
  Tensor2 out = h * params_.value("expert.w3");
  out.rowwise() += params_.value("expert.b3").row(0);
  nn::require_finite(out, "expert network");

  const auto l = static_cast<Eigen::Index>(config_.latent_dim);
  const auto rows = static_cast<std::size_t>(out.rows());
  expert_mu_.resize(rows);
  expert_var_.resize(rows);
  expert_precision_.resize(rows);
  expert_weighted_mean_.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = out.row(static_cast<Eigen::Index>(r));
    expert_mu_[r] = row.head(l).transpose();
    expert_var_[r] = row.tail(l).transpose().unaryExpr(&softplus).array() + config_.variance_floor;
    expert_precision_[r] = expert_var_[r].cwiseInverse();
    expert_weighted_mean_[r] = expert_mu_[r].cwiseProduct(expert_precision_[r]);
  }
}

DiagGaussian Vae::expert(std::size_t feature, BinaryValue value) const {
  if (feature >= num_features() || value > 1) throw ContractError("Vae::expert: invalid observation");
  const std::size_t r = 2 * feature + value;
  return {expert_mu_[r], expert_var_[r]};
}

const Eigen::VectorXd& Vae::expert_precision(std::size_t feature, BinaryValue value) const {
  if (feature >= num_features() || value > 1) throw ContractError("Vae::expert: invalid observation");
  return expert_precision_[2 * feature + value];
}

const Eigen::VectorXd& Vae::expert_weighted_mean(std::size_t feature, BinaryValue value) const {
  if (feature >= num_features() || value > 1) throw ContractError("Vae::expert: invalid observation");
  return expert_weighted_mean_[2 * feature + value];
}

GaussianProduct Vae::encode_product(const FeatureEvidence& evidence) const {
  GaussianProduct product(prior());
  for (const auto& o : evidence) {
    product.add_natural(expert_precision(o.feature, o.value), expert_weighted_mean(o.feature, o.value));
  }
  return product;
}

DiagGaussian Vae::encode(const FeatureEvidence& evidence) const { return encode_product(evidence).gaussian(); }

Tensor2 Vae::decode(const Tensor2& z) const {
  if (z.cols() != static_cast<Eigen::Index>(config_.latent_dim)) throw ContractError("Vae::decode: wrong latent width");
  Tensor2 h = relu_affine(z, params_.value("decoder.w1"), params_.value("decoder.b1"));
  h = relu_affine(h, params_.value("decoder.w2"), params_.value("decoder.b2"));
  Tensor2 logits = h * params_.value("decoder.w3");
  logits.rowwise() += params_.value("decoder.b3").row(0);
  Tensor2 p = logits.unaryExpr([](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  nn::require_finite(p, "decoder");
  return p;
}

ElboTerms Vae::elbo(nn::Tape& tape, const Tensor2& data, const Tensor2& keep, const Tensor2& noise,
                    double kl_scale) const {
  const auto f = static_cast<Eigen::Index>(num_features());
  const auto l = static_cast<Eigen::Index>(config_.latent_dim);
  const Eigen::Index batch = data.rows();
  if (data.cols() != f || keep.rows() != batch || keep.cols() != f || noise.rows() != batch ||
      noise.cols() != l) {
    throw ContractError("Vae::elbo: inconsistent batch shapes");
  }

  // Expert table for all 2F (feature, value) inputs, then each sample's
  // posterior is a selection-sum over that table.
  Var y = tape.constant(expert_inputs(embeddings_));
  auto affine = [&](Var x, const char* w, const char* b) {
    return nn::add_row(tape, nn::matmul(tape, x, tape.parameter(params_, w)), tape.parameter(params_, b));
  };
  Var h = nn::relu(tape, affine(y, "expert.w1", "expert.b1"));
  h = nn::relu(tape, affine(h, "expert.w2", "expert.b2"));
  Var out = affine(h, "expert.w3", "expert.b3");
  Var mu = nn::slice_cols(tape, out, 0, l);
  Var var = nn::add_scalar(tape, nn::softplus(tape, nn::slice_cols(tape, out, l, l)), config_.variance_floor);
  Var precision = nn::reciprocal(tape, var);
  Var weighted = nn::mul(tape, mu, precision);

  Tensor2 select = Tensor2::Zero(batch, 2 * f);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index i = 0; i < f; ++i) {
      if (keep(b, i) != 0.0) select(b, 2 * i + (data(b, i) != 0.0 ? 1 : 0)) = 1.0;
    }
  }
  Var sel = tape.constant(std::move(select));
  Var post_precision = nn::add_scalar(tape, nn::matmul(tape, sel, precision), 1.0);  // prior N(0, I)
  Var post_weighted = nn::matmul(tape, sel, weighted);
  Var post_mu = nn::div(tape, post_weighted, post_precision);
  Var post_var = nn::reciprocal(tape, post_precision);
  Var z = nn::add(tape, post_mu, nn::mul(tape, nn::sqrt(tape, post_var), tape.constant(noise)));

  Var d = nn::relu(tape, affine(z, "decoder.w1", "decoder.b1"));
  d = nn::relu(tape, affine(d, "decoder.w2", "decoder.b2"));
  Var logits = affine(d, "decoder.w3", "decoder.b3");

  const double inv_b = 1.0 / static_cast<double>(batch);
  Var recon = nn::scale(tape, nn::bce_with_logits_sum(tape, logits, data), inv_b);
  Var quad = nn::sum(tape, nn::add(tape, post_var, nn::square(tape, post_mu)));
  Var logdet = nn::sum(tape, nn::log(tape, post_var));
  Var kl = nn::add_scalar(tape, nn::scale(tape, nn::sub(tape, quad, logdet), 0.5 * inv_b),
                          -0.5 * static_cast<double>(l));

  ElboTerms terms;
  terms.reconstruction = tape.value(recon)(0, 0);
  terms.kl = tape.value(kl)(0, 0);
  terms.loss = nn::add(tape, recon, nn::scale(tape, kl, config_.beta * kl_scale));
  return terms;
}

Tensor2 normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Tensor2 m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

Tensor2 sample_latents(const DiagGaussian& q, std::size_t n, Rng& rng) {
  Tensor2 z = normal_matrix(static_cast<Eigen::Index>(n), q.mu.size(), rng);
  const Eigen::RowVectorXd sd = q.var.cwiseSqrt().transpose();
  const Eigen::RowVectorXd mu = q.mu.transpose();
  for (Eigen::Index r = 0; r < z.rows(); ++r) z.row(r) = mu + z.row(r).cwiseProduct(sd);
  return z;
}

Imputation sample_unobserved(const Vae& vae, const FeatureEvidence& evidence, std::size_t n, Rng& rng) {
  if (n == 0) throw ContractError("sample_unobserved: n must be at least 1");
  const DiagGaussian q = vae.encode(evidence);
  const Tensor2 probs = vae.decode(sample_latents(q, n, rng));
  Imputation out;
  out.mean_probabilities = probs.colwise().mean().transpose();
  out.completions.resize(probs.rows(), probs.cols());
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    for (Eigen::Index c = 0; c < probs.cols(); ++c) {
      out.completions(r, c) = rng.uniform() < probs(r, c) ? 1.0 : 0.0;
    }
  }
  for (const auto& o : evidence) {
    out.completions.col(static_cast<Eigen::Index>(o.feature)).setConstant(o.value);
  }
  return out;
}

std::string embedding_fingerprint(const Tensor2& embeddings) {
  return fnv1a_hex(nn::encode_tensors({{"embedding", embeddings}}));
}

void save_vae(const Vae& vae, const std::filesystem::path& stem, const std::string& kb_fingerprint) {
  nn::NamedTensors tensors = nn::tensors_of(vae.params());
  tensors.emplace(kFrozenEmbedding, vae.embeddings());
  const std::string bytes = nn::encode_tensors(tensors);
  auto bin = stem;
  bin += ".bin";
  write_text_file(bin, bytes);
  const auto& c = vae.config();
  nlohmann::ordered_json side{{"model", "vae"},
                              {"num_symptoms", vae.num_symptoms()},
                              {"num_diseases", vae.num_diseases()},
                              {"latent_dim", c.latent_dim},
                              {"hidden", c.hidden},
                              {"beta", c.beta},
                              {"variance_floor", c.variance_floor},
                              {"drop_law", "per-sample rate ~ Uniform[0, 0.95], independent per feature"},
                              {"embedding_fingerprint", embedding_fingerprint(vae.embeddings())},
                              {"kb_fingerprint", kb_fingerprint},
                              {"checkpoint_fingerprint", fnv1a_hex(bytes)}};
  auto json = stem;
  json += ".json";
  write_text_file(json, side.dump(2) + "\n");
}

Vae load_vae(const std::filesystem::path& stem, const std::string& kb_fingerprint) {
  auto json = stem;
  json += ".json";
  auto bin = stem;
  bin += ".bin";
  const auto side = parse_json(read_text_file(json), json.string());
  if (side.at("kb_fingerprint").get<std::string>() != kb_fingerprint) {
    throw ValidationError(json.string() + ": trained for a different knowledge base");
  }
  const std::string bytes = read_text_file(bin);
  if (fnv1a_hex(bytes) != side.at("checkpoint_fingerprint").get<std::string>()) {
    throw ValidationError(bin.string() + ": checkpoint fingerprint mismatch");
  }
  nn::NamedTensors tensors = nn::decode_tensors(bytes);
  auto emb = tensors.find(kFrozenEmbedding);
  if (emb == tensors.end()) throw ValidationError(bin.string() + ": missing frozen embeddings");
  Tensor2 embeddings = emb->second;
  tensors.erase(emb);
  if (embedding_fingerprint(embeddings) != side.at("embedding_fingerprint").get<std::string>()) {
    throw ValidationError(bin.string() + ": embedding fingerprint mismatch");
  }
  VaeConfig c;
  c.latent_dim = side.at("latent_dim").get<std::size_t>();
  c.hidden = side.at("hidden").get<std::size_t>();
  c.beta = side.at("beta").get<double>();
  c.variance_floor = side.at("variance_floor").get<double>();
  Vae vae(side.at("num_symptoms").get<std::size_t>(), side.at("num_diseases").get<std::size_t>(),
          std::move(embeddings), c);
  nn::assign_tensors(vae.params(), tensors);
  vae.refresh_experts();
  return vae;
}

}  // namespace bsoda
