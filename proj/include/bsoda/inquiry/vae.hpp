#ifndef BSODA_INQUIRY_VAE_HPP
#define BSODA_INQUIRY_VAE_HPP

#include <filesystem>
#include <vector>

#include "bsoda/core/types.hpp"
#include "bsoda/inquiry/gaussian.hpp"
#include "bsoda/nn/params.hpp"
#include "bsoda/nn/tape.hpp"
#include "bsoda/simulator/rng.hpp"

namespace bsoda {

struct VaeConfig {
  std::size_t latent_dim = 32;  // L
  std::size_t hidden = 64;
  double beta = 1.0;
  double variance_floor = 1e-6;
  std::uint64_t seed = 3;
};

/// One observed feature, indexed in the shared symptom-then-disease layout.
struct Observation {
  std::size_t feature = 0;
  BinaryValue value = 0;
};
using FeatureEvidence = std::vector<Observation>;

struct ElboTerms {
  nn::Var loss;  // reconstruction + beta * kl, per-sample mean
  double reconstruction = 0.0;
  double kl = 0.0;
};

/// Imputed completions of a partially observed patient.
struct Imputation {
  nn::Tensor2 completions;            // n x F, 0/1, observed features echoed
  Eigen::VectorXd mean_probabilities;  // F, decoder probability averaged over draws
};

/// VAE with a product-of-experts encoder and a Bernoulli decoder over all
/// |S|+|D| features.
///
/// The expert network h maps y_i = [x_i, e_i] to (mu_i, V_i) with
/// V_i = softplus(.) + floor. Embeddings e_i are frozen. Because x_i is
/// binary there are only 2F distinct experts; they are cached after every
/// parameter change (refresh_experts), so encoding costs O(|O| L).
class Vae {
 public:
  Vae(std::size_t num_symptoms, std::size_t num_diseases, nn::Tensor2 embeddings, VaeConfig config);

  std::size_t num_symptoms() const { return num_symptoms_; }
  std::size_t num_diseases() const { return num_diseases_; }
  std::size_t num_features() const { return num_symptoms_ + num_diseases_; }
  std::size_t latent_dim() const { return config_.latent_dim; }
  const VaeConfig& config() const { return config_; }
  const nn::Tensor2& embeddings() const { return embeddings_; }

  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  /// Recompute the cached expert table from the current parameters.
  void refresh_experts();

  DiagGaussian prior() const { return DiagGaussian::standard(config_.latent_dim); }
  DiagGaussian expert(std::size_t feature, BinaryValue value) const;
  /// Natural parameters of an expert: (1/V, mu/V).
  const Eigen::VectorXd& expert_precision(std::size_t feature, BinaryValue value) const;
  const Eigen::VectorXd& expert_weighted_mean(std::size_t feature, BinaryValue value) const;

  /// Product of the prior and one expert per observation.
  DiagGaussian encode(const FeatureEvidence& evidence) const;
  GaussianProduct encode_product(const FeatureEvidence& evidence) const;

  /// Decoder probabilities for each row of z (n x L) -> n x F.
  nn::Tensor2 decode(const nn::Tensor2& z) const;

  /// Differentiable ELBO loss over complete rows `data` (B x F) where only
  /// entries with keep(b, i) = 1 reach the encoder; reconstruction covers
  /// every feature. noise is the reparameterisation epsilon (B x L).
  /// kl_scale multiplies beta (KL warm-up during training).
  ElboTerms elbo(nn::Tape& tape, const nn::Tensor2& data, const nn::Tensor2& keep,
                 const nn::Tensor2& noise, double kl_scale = 1.0) const;

 private:
  std::size_t num_symptoms_;
  std::size_t num_diseases_;
  nn::Tensor2 embeddings_;
  VaeConfig config_;
  nn::ParamStore params_;
  std::vector<Eigen::VectorXd> expert_mu_;
  std::vector<Eigen::VectorXd> expert_var_;
  std::vector<Eigen::VectorXd> expert_precision_;
  std::vector<Eigen::VectorXd> expert_weighted_mean_;
};

/// Draws n latent samples from encode(evidence), decodes each and samples
/// every unobserved feature; observed features are copied through.
Imputation sample_unobserved(const Vae& vae, const FeatureEvidence& evidence, std::size_t n, Rng& rng);

/// Standard-normal matrix of the given shape.
nn::Tensor2 normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng);

/// n reparameterised draws mu + sqrt(V) * eps from a Gaussian.
nn::Tensor2 sample_latents(const DiagGaussian& q, std::size_t n, Rng& rng);

void save_vae(const Vae& vae, const std::filesystem::path& stem, const std::string& kb_fingerprint);
Vae load_vae(const std::filesystem::path& stem, const std::string& kb_fingerprint);

/// Hash of the float32 encoding of an embedding table.
std::string embedding_fingerprint(const nn::Tensor2& embeddings);

}  // namespace bsoda

#endif  // BSODA_INQUIRY_VAE_HPP
