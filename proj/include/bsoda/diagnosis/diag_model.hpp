#ifndef BSODA_DIAGNOSIS_DIAG_MODEL_HPP
#define BSODA_DIAGNOSIS_DIAG_MODEL_HPP

#include <filesystem>
#include <vector>

#include "bsoda/core/types.hpp"
#include "bsoda/nn/params.hpp"
#include "bsoda/nn/tape.hpp"

namespace bsoda {

struct DiagConfig {
  std::size_t embedding_dim = 64;  // k
  std::size_t attention_dim = 64;  // c, column size of W_Q / W_K / W_V
  std::size_t blocks = 2;          // J
  std::size_t mlp_hidden = 64;
  std::size_t head_hidden = 64;
  double kl_weight = 0.1;  // lambda
  std::uint64_t seed = 1;
};

/// Per-disease mean and (population) standard deviation of p_D over a set
/// of imputed inputs.
struct PredictiveSummary {
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma;
  std::size_t n_samples = 0;

  std::vector<DiseaseId> ranking() const;
};

/// Everything one forward pass exposes for a single patient.
struct DiagForward {
  Eigen::VectorXd probabilities;
  std::vector<nn::Tensor2> attentions;  // one F x F matrix per block
  nn::Tensor2 final_embeddings;         // F x k
};

struct DiagLoss {
  nn::Var total;
  double cross_entropy = 0.0;
  double attention_kl = 0.0;
};

/// Knowledge-guided self-attention classifier over all symptom and disease
/// features. Input row i is [x_i, e_i] for symptoms and [0, e_i] for
/// diseases; each block computes
///
///   A = softmax(Q K^T / sqrt(c) + M),   E' = MLP(A V)
///
/// and a shared head maps each disease's final embedding to one logit.
class DiagModel {
 public:
  DiagModel(std::size_t num_symptoms, std::size_t num_diseases, DiagConfig config);

  std::size_t num_symptoms() const { return num_symptoms_; }
  std::size_t num_diseases() const { return num_diseases_; }
  std::size_t num_features() const { return num_symptoms_ + num_diseases_; }
  const DiagConfig& config() const { return config_; }
  const nn::Tensor2& mask() const { return mask_; }

  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  struct TapeOutputs {
    nn::Var logits;                   // B x |D|
    std::vector<nn::Var> attentions;  // (B*F) x F each
    nn::Var final_embeddings;         // (B*F) x k
  };
  /// Differentiable forward over a B x |S| batch of 0/1 symptom values.
  TapeOutputs forward(nn::Tape& tape, const nn::Tensor2& symptoms) const;

  /// Cross-entropy against target weights (B x |D|, normalised by
  /// `normaliser`) plus kl_weight times the summed attention regulariser
  /// KL(A^(j-1) || A^(j)) with A^(0) = prior. sample_weights scales each
  /// sample's regulariser rows; empty means uniform.
  DiagLoss loss(nn::Tape& tape, const nn::Tensor2& symptoms, const nn::Tensor2& targets,
                double normaliser, const nn::Tensor2& prior,
                const std::vector<double>& sample_weights = {}) const;

  /// Batched p_D for a B x |S| input; no tape.
  nn::Tensor2 predict(const nn::Tensor2& symptoms) const;

  /// Single-patient forward with attention matrices and embeddings.
  DiagForward inspect(const std::vector<BinaryValue>& symptoms) const;

  /// Learned feature embeddings e_i, (|S|+|D|) x k.
  nn::Tensor2 export_embeddings() const { return params_.value("embedding"); }

 private:
  std::size_t num_symptoms_;
  std::size_t num_diseases_;
  DiagConfig config_;
  nn::Tensor2 mask_;
  nn::ParamStore params_;
};

/// Mean and standard deviation over the rows of a batch of imputed inputs.
/// Throws ContractError for fewer than two rows.
PredictiveSummary summarize_predictions(const DiagModel& model, const nn::Tensor2& imputed);
PredictiveSummary summarize_distributions(const nn::Tensor2& distributions);

/// Tensors to `<stem>.bin`, hyperparameters and fingerprints to `<stem>.json`.
void save_diag_model(const DiagModel& model, const std::filesystem::path& stem,
                     const std::string& kb_fingerprint);
DiagModel load_diag_model(const std::filesystem::path& stem, const std::string& kb_fingerprint);

}  // namespace bsoda

#endif  // BSODA_DIAGNOSIS_DIAG_MODEL_HPP
