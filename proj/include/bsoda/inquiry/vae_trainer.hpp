#ifndef BSODA_INQUIRY_VAE_TRAINER_HPP
#define BSODA_INQUIRY_VAE_TRAINER_HPP

#include <functional>
#include <optional>
#include <vector>

#include "bsoda/core/dataset.hpp"
#include "bsoda/inquiry/vae.hpp"

namespace bsoda {

struct VaeEpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double reconstruction = 0.0;
  double kl = 0.0;
  double val_loss = 0.0;
};

struct VaeTrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  double drop_max = 0.95;              // per-sample drop rate ~ Uniform[0, drop_max]
  std::optional<double> forced_drop;   // fixed drop rate instead of the uniform law
  // beta is 0 for kl_free_epochs, then ramps linearly to full over
  // kl_warmup_epochs. Any KL weight before the encoder leaves the marginal
  // plateau collapses it onto the prior.
  std::size_t kl_free_epochs = 3;
  std::size_t kl_warmup_epochs = 5;
  nn::AdamConfig adam{3e-3};
  std::uint64_t seed = 11;
  std::function<void(const VaeEpochLog&)> on_epoch;
};

struct VaeTrainResult {
  std::vector<VaeEpochLog> history;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
};

/// Complete rows [x_S, one-hot x_D] for a set of records, n x (|S|+|D|).
nn::Tensor2 complete_rows(const Dataset& records, std::size_t num_symptoms, std::size_t num_diseases);

/// Keep mask for one batch: each row draws its drop rate, then hides each
/// feature independently with that probability.
nn::Tensor2 draw_keep_mask(Eigen::Index rows, Eigen::Index cols, const VaeTrainConfig& config, Rng& rng);

/// Negative ELBO per record on `rows`, with masks and noise drawn from a
/// fixed seed so successive evaluations are comparable.
double validation_loss(const Vae& vae, const nn::Tensor2& rows, const VaeTrainConfig& config);

/// Adam on the negative ELBO. Keeps the post-warm-up epoch with the lowest
/// validation loss and refreshes the cached experts before returning.
VaeTrainResult train_vae(Vae& vae, const Dataset& train, const Dataset& val, const VaeTrainConfig& config);

}  // namespace bsoda

#endif  // BSODA_INQUIRY_VAE_TRAINER_HPP
