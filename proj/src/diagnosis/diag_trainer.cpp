#include "bsoda/diagnosis/diag_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace bsoda {

using nn::Tensor2;

GroupedInputs group_records(const Dataset& records, std::size_t num_symptoms, std::size_t num_diseases) {
  std::map<std::vector<SymptomId>, std::size_t> index;
  std::vector<const DatasetRecord*> firsts;
  std::vector<std::vector<double>> counts;
  for (const auto& r : records) {
    auto [it, inserted] = index.emplace(r.positives, firsts.size());
    if (inserted) {
      firsts.push_back(&r);
      counts.emplace_back(num_diseases, 0.0);
    }
    counts[it->second][r.disease.value] += 1.0;
  }
  GroupedInputs g;
  g.total = records.size();
  g.symptoms = Tensor2::Zero(static_cast<Eigen::Index>(firsts.size()), static_cast<Eigen::Index>(num_symptoms));
  g.labels = Tensor2::Zero(static_cast<Eigen::Index>(firsts.size()), static_cast<Eigen::Index>(num_diseases));
  for (std::size_t u = 0; u < firsts.size(); ++u) {
    for (SymptomId s : firsts[u]->positives) g.symptoms(static_cast<Eigen::Index>(u), s.value) = 1.0;
    for (std::size_t d = 0; d < num_diseases; ++d) {
      g.labels(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(d)) = counts[u][d];
    }
  }
  return g;
}

double top1_accuracy(const DiagModel& model, const GroupedInputs& inputs) {
  return validation_score(model, inputs).top1;
}

bool ValidationScore::better_than(const ValidationScore& other) const {
  if (top1 != other.top1) return top1 > other.top1;
  return cross_entropy < other.cross_entropy;
}

ValidationScore validation_score(const DiagModel& model, const GroupedInputs& inputs) {
  ValidationScore score;
  if (inputs.total == 0) return score;
  const Tensor2 probs = model.predict(inputs.symptoms);
  double correct = 0.0;
  double loss = 0.0;
  for (Eigen::Index u = 0; u < probs.rows(); ++u) {
    Eigen::Index best = 0;
    probs.row(u).maxCoeff(&best);
    correct += inputs.labels(u, best);
    for (Eigen::Index d = 0; d < probs.cols(); ++d) {
      if (inputs.labels(u, d) > 0.0) loss -= inputs.labels(u, d) * std::log(std::max(probs(u, d), 1e-300));
    }
  }
  score.top1 = correct / static_cast<double>(inputs.total);
  score.cross_entropy = loss / static_cast<double>(inputs.total);
  return score;
}

DiagTrainResult train_diag(DiagModel& model, const PriorMatrices& priors, const Dataset& train,
                           const Dataset& val, const DiagTrainConfig& config) {
  if (train.empty()) throw ContractError("train_diag: empty training set");
  const GroupedInputs grouped = group_records(train, model.num_symptoms(), model.num_diseases());
  const GroupedInputs val_grouped = group_records(val.empty() ? train : val, model.num_symptoms(),
                                                  model.num_diseases());
  const auto unique = static_cast<std::size_t>(grouped.symptoms.rows());
  // Normalising by the expected batch weight keeps each batch an unbiased
  // estimate of the per-record mean loss.
  const double mean_count = static_cast<double>(grouped.total) / static_cast<double>(unique);

  Rng rng(config.seed);
  std::vector<std::size_t> order(unique);
  for (std::size_t i = 0; i < unique; ++i) order[i] = i;

  DiagTrainResult result;
  ValidationScore best_score = validation_score(model, val_grouped);
  result.best_val_top1 = best_score.top1;
  result.best_val_cross_entropy = best_score.cross_entropy;
  nn::ParamStore best = model.params();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    DiagEpochLog log;
    log.epoch = epoch;
    double weight_seen = 0.0;
    try {
      for (std::size_t start = 0; start < unique; start += config.batch_size) {
        const std::size_t n = std::min(config.batch_size, unique - start);
        Tensor2 x(static_cast<Eigen::Index>(n), grouped.symptoms.cols());
        Tensor2 y(static_cast<Eigen::Index>(n), grouped.labels.cols());
        std::vector<double> weights(n);
        for (std::size_t i = 0; i < n; ++i) {
          const auto u = static_cast<Eigen::Index>(order[start + i]);
          x.row(static_cast<Eigen::Index>(i)) = grouped.symptoms.row(u);
          y.row(static_cast<Eigen::Index>(i)) = grouped.labels.row(u);
          weights[i] = grouped.labels.row(u).sum();
        }
        nn::Tape tape;
        DiagLoss l = model.loss(tape, x, y, mean_count * static_cast<double>(n), priors.conditional, weights);
        const nn::Gradients grads = tape.backward(l.total);
        nn::optimizer_step(model.params(), grads, config.adam);
        const double w = y.sum();
        weight_seen += w;
        log.cross_entropy += l.cross_entropy * mean_count * static_cast<double>(n);
        log.attention_kl += l.attention_kl * w;
      }
    } catch (const NumericError&) {
      model.params() = best;
      throw;
    }
    log.cross_entropy /= weight_seen;
    log.attention_kl /= weight_seen;
    log.loss = log.cross_entropy + model.config().kl_weight * log.attention_kl;
    const ValidationScore score = validation_score(model, val_grouped);
    log.val_top1 = score.top1;
    log.val_cross_entropy = score.cross_entropy;
    result.history.push_back(log);
    if (config.on_epoch) config.on_epoch(log);

    if (score.better_than(best_score)) {
      best_score = score;
      result.best_val_top1 = score.top1;
      result.best_val_cross_entropy = score.cross_entropy;
      result.best_epoch = epoch;
      best = model.params();
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  model.params() = best;
  return result;
}

}  // namespace bsoda
