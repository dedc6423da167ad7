#include "bsoda/inquiry/vae_trainer.hpp"

#include <algorithm>

namespace bsoda {

using nn::Tensor2;

Tensor2 complete_rows(const Dataset& records, std::size_t num_symptoms, std::size_t num_diseases) {
  Tensor2 rows = Tensor2::Zero(static_cast<Eigen::Index>(records.size()),
                               static_cast<Eigen::Index>(num_symptoms + num_diseases));
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto i = static_cast<Eigen::Index>(r);
    for (SymptomId s : records[r].positives) rows(i, s.value) = 1.0;
    rows(i, static_cast<Eigen::Index>(num_symptoms + records[r].disease.value)) = 1.0;
  }
  return rows;
}

Tensor2 draw_keep_mask(Eigen::Index rows, Eigen::Index cols, const VaeTrainConfig& config, Rng& rng) {
  Tensor2 keep(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double rho = config.forced_drop ? *config.forced_drop : rng.uniform() * config.drop_max;
    for (Eigen::Index c = 0; c < cols; ++c) keep(r, c) = rng.uniform() < rho ? 0.0 : 1.0;
  }
  return keep;
}

namespace {

Tensor2 gather(const Tensor2& rows, const std::vector<std::size_t>& order, std::size_t start, std::size_t n) {
  Tensor2 out(static_cast<Eigen::Index>(n), rows.cols());
  for (std::size_t i = 0; i < n; ++i) {
    out.row(static_cast<Eigen::Index>(i)) = rows.row(static_cast<Eigen::Index>(order[start + i]));
  }
  return out;
}

}  // namespace

double validation_loss(const Vae& vae, const Tensor2& rows, const VaeTrainConfig& config) {
  if (rows.rows() == 0) return 0.0;
  Rng rng(config.seed ^ 0x5eedULL);
  double total = 0.0;
  const auto batch = static_cast<Eigen::Index>(std::max<std::size_t>(config.batch_size, 1));
  for (Eigen::Index start = 0; start < rows.rows(); start += batch) {
    const Eigen::Index n = std::min(batch, rows.rows() - start);
    const Tensor2 data = rows.middleRows(start, n);
    const Tensor2 keep = draw_keep_mask(n, rows.cols(), config, rng);
    const Tensor2 noise = normal_matrix(n, static_cast<Eigen::Index>(vae.latent_dim()), rng);
    nn::Tape tape;
    const ElboTerms t = vae.elbo(tape, data, keep, noise);
    total += tape.value(t.loss)(0, 0) * static_cast<double>(n);
  }
  return total / static_cast<double>(rows.rows());
}

VaeTrainResult train_vae(Vae& vae, const Dataset& train, const Dataset& val, const VaeTrainConfig& config) {
  if (train.empty()) throw ContractError("train_vae: empty training set");
  const Tensor2 rows = complete_rows(train, vae.num_symptoms(), vae.num_diseases());
  const Tensor2 val_rows = complete_rows(val.empty() ? train : val, vae.num_symptoms(), vae.num_diseases());
  const auto l = static_cast<Eigen::Index>(vae.latent_dim());

  Rng rng(config.seed);
  std::vector<std::size_t> order(static_cast<std::size_t>(rows.rows()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const auto total_rows = static_cast<double>(order.size());
  VaeTrainResult result;
  result.best_val_loss = validation_loss(vae, val_rows, config);
  nn::ParamStore best = vae.params();
  bool have_best = false;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    VaeEpochLog log;
    log.epoch = epoch;
    try {
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t n = std::min(config.batch_size, order.size() - start);
        const Tensor2 data = gather(rows, order, start, n);
        const Tensor2 keep = draw_keep_mask(data.rows(), data.cols(), config, rng);
        const Tensor2 noise = normal_matrix(data.rows(), l, rng);
        const double progress = static_cast<double>(epoch - 1) + static_cast<double>(start) / total_rows -
                                static_cast<double>(config.kl_free_epochs);
        double kl_scale = progress < 0.0 ? 0.0 : 1.0;
        if (progress >= 0.0 && config.kl_warmup_epochs > 0) {
          kl_scale = std::min(1.0, progress / static_cast<double>(config.kl_warmup_epochs));
        }
        nn::Tape tape;
        const ElboTerms t = vae.elbo(tape, data, keep, noise, kl_scale);
        nn::optimizer_step(vae.params(), tape.backward(t.loss), config.adam);
        const double w = static_cast<double>(n);
        log.loss += tape.value(t.loss)(0, 0) * w;
        log.reconstruction += t.reconstruction * w;
        log.kl += t.kl * w;
      }
    } catch (const NumericError&) {
      vae.params() = best;
      vae.refresh_experts();
      throw;
    }
    const double total = static_cast<double>(order.size());
    log.loss /= total;
    log.reconstruction /= total;
    log.kl /= total;
    log.val_loss = validation_loss(vae, val_rows, config);
    result.history.push_back(log);
    if (config.on_epoch) config.on_epoch(log);
    const bool warm = epoch >= config.kl_free_epochs + config.kl_warmup_epochs;
    if (warm && (!have_best || log.val_loss < result.best_val_loss)) {
      have_best = true;
      result.best_val_loss = log.val_loss;
      result.best_epoch = epoch;
      best = vae.params();
    }
  }
  if (have_best) {
    vae.params() = best;
  } else if (!result.history.empty()) {
    // Fewer epochs than the warm-up: keep the last one.
    result.best_epoch = result.history.back().epoch;
    result.best_val_loss = result.history.back().val_loss;
  }
  vae.refresh_experts();
  return result;
}

}  // namespace bsoda
