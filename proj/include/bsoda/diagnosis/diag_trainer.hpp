#ifndef BSODA_DIAGNOSIS_DIAG_TRAINER_HPP
#define BSODA_DIAGNOSIS_DIAG_TRAINER_HPP

#include <functional>
#include <vector>

#include "bsoda/core/dataset.hpp"
#include "bsoda/diagnosis/diag_model.hpp"
#include "bsoda/diagnosis/priors.hpp"
#include "bsoda/nn/params.hpp"

namespace bsoda {

struct DiagTrainConfig {
  std::size_t max_epochs = 100;
  std::size_t batch_size = 256;
  std::size_t patience = 10;  // epochs without validation improvement
  nn::AdamConfig adam{};
  std::uint64_t seed = 7;
  std::function<void(const struct DiagEpochLog&)> on_epoch;
};

struct DiagEpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double cross_entropy = 0.0;
  double attention_kl = 0.0;
  double val_top1 = 0.0;
  double val_cross_entropy = 0.0;
};

struct DiagTrainResult {
  std::vector<DiagEpochLog> history;
  std::size_t best_epoch = 0;
  double best_val_top1 = 0.0;
  double best_val_cross_entropy = 0.0;
};

/// Distinct symptom vectors with per-disease counts. Records that share a
/// symptom vector collapse into one input with a label histogram, which
/// leaves the summed cross-entropy unchanged.
struct GroupedInputs {
  nn::Tensor2 symptoms;  // U x |S|
  nn::Tensor2 labels;    // U x |D| counts
  std::size_t total = 0;
};
GroupedInputs group_records(const Dataset& records, std::size_t num_symptoms, std::size_t num_diseases);

/// Fraction of records whose disease is the model's argmax.
double top1_accuracy(const DiagModel& model, const GroupedInputs& inputs);

struct ValidationScore {
  double top1 = 0.0;
  double cross_entropy = 0.0;  // per record
  /// Higher Top-1 wins; equal Top-1 goes to the lower cross-entropy.
  bool better_than(const ValidationScore& other) const;
};
ValidationScore validation_score(const DiagModel& model, const GroupedInputs& inputs);

/// Adam on cross-entropy plus the attention regulariser, early-stopped on
/// validation Top-1 with cross-entropy as the tie-break. The model is left at its best validation epoch. A
/// numeric failure restores that state and throws NumericError.
DiagTrainResult train_diag(DiagModel& model, const PriorMatrices& priors, const Dataset& train,
                           const Dataset& val, const DiagTrainConfig& config);

}  // namespace bsoda

#endif  // BSODA_DIAGNOSIS_DIAG_TRAINER_HPP
