#include "bsoda/diagnosis/diag_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "bsoda/core/json_io.hpp"
#include "bsoda/diagnosis/priors.hpp"
#include "bsoda/nn/checkpoint.hpp"

namespace bsoda {

using nn::Tensor2;
using nn::Var;

namespace {

std::string block_name(std::size_t j, const char* suffix) {
  return "block" + std::to_string(j) + "." + suffix;
}

// Forward passes allocate multi-megabyte temporaries; keep them on the heap
// instead of a fresh mmap per call.
#if defined(__GLIBC__)
const bool kAllocatorTuned = [] {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  return true;
}();
#endif

}  // namespace

std::vector<DiseaseId> PredictiveSummary::ranking() const {
  std::vector<DiseaseId> order(static_cast<std::size_t>(mu.size()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = DiseaseId(static_cast<std::uint32_t>(i));
  std::stable_sort(order.begin(), order.end(),
                   [&](DiseaseId a, DiseaseId b) { return mu(a.value) > mu(b.value); });
  return order;
}

DiagModel::DiagModel(std::size_t num_symptoms, std::size_t num_diseases, DiagConfig config)
    : num_symptoms_(num_symptoms),
      num_diseases_(num_diseases),
      config_(config),
      mask_(attention_mask(num_symptoms, num_diseases)) {
  if (config_.blocks == 0) throw ContractError("DiagModel needs at least one attention block");
  Rng rng(config_.seed);
  const auto f = static_cast<Eigen::Index>(num_features());
  const auto k = static_cast<Eigen::Index>(config_.embedding_dim);
  const auto c = static_cast<Eigen::Index>(config_.attention_dim);
  const auto h = static_cast<Eigen::Index>(config_.mlp_hidden);
  const auto hh = static_cast<Eigen::Index>(config_.head_hidden);

  params_.create("embedding", f, k, rng);
  for (std::size_t j = 1; j <= config_.blocks; ++j) {
    const Eigen::Index in = j == 1 ? k + 1 : k;
    params_.create(block_name(j, "wq"), in, c, rng);
    params_.create(block_name(j, "wk"), in, c, rng);
    params_.create(block_name(j, "wv"), in, c, rng);
    params_.create(block_name(j, "mlp1.w"), c, h, rng);
    params_.create_zero(block_name(j, "mlp1.b"), 1, h);
    params_.create(block_name(j, "mlp2.w"), h, k, rng);
    params_.create_zero(block_name(j, "mlp2.b"), 1, k);
  }
  params_.create("head.w1", k, hh, rng);
  params_.create_zero("head.b1", 1, hh);
  params_.create("head.w2", hh, 1, rng);
  params_.create_zero("head.b2", 1, 1);
}

DiagModel::TapeOutputs DiagModel::forward(nn::Tape& tape, const Tensor2& symptoms) const {
  const auto ns = static_cast<Eigen::Index>(num_symptoms_);
  const auto nd = static_cast<Eigen::Index>(num_diseases_);
  const auto f = ns + nd;
  if (symptoms.cols() != ns) {
    throw ContractError("diag forward: expected " + std::to_string(ns) + " symptom columns, got " +
                        std::to_string(symptoms.cols()));
  }
  const Eigen::Index batch = symptoms.rows();

  Tensor2 values = Tensor2::Zero(batch * f, 1);
  std::vector<Eigen::Index> tile(static_cast<std::size_t>(batch * f));
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index i = 0; i < f; ++i) {
      tile[static_cast<std::size_t>(b * f + i)] = i;
      if (i < ns) values(b * f + i, 0) = symptoms(b, i);
    }
  }
  Var emb = tape.parameter(params_, "embedding");
  Var e = nn::concat_cols(tape, tape.constant(std::move(values)), nn::gather_rows(tape, emb, std::move(tile)));

  TapeOutputs out;
  const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(config_.attention_dim));
  for (std::size_t j = 1; j <= config_.blocks; ++j) {
    Var q = nn::matmul(tape, e, tape.parameter(params_, block_name(j, "wq")));
    Var k = nn::matmul(tape, e, tape.parameter(params_, block_name(j, "wk")));
    Var v = nn::matmul(tape, e, tape.parameter(params_, block_name(j, "wv")));
    Var logits = nn::scale(tape, nn::block_matmul_nt(tape, q, k, f), inv_sqrt_c);
    Var a = nn::masked_softmax_rows(tape, logits, mask_);
    out.attentions.push_back(a);
    Var hsum = nn::block_matmul(tape, a, v, f);
    Var h1 = nn::relu(tape, nn::add_row(tape, nn::matmul(tape, hsum, tape.parameter(params_, block_name(j, "mlp1.w"))),
                                         tape.parameter(params_, block_name(j, "mlp1.b"))));
    e = nn::add_row(tape, nn::matmul(tape, h1, tape.parameter(params_, block_name(j, "mlp2.w"))),
                    tape.parameter(params_, block_name(j, "mlp2.b")));
  }
  out.final_embeddings = e;

  std::vector<Eigen::Index> disease_rows;
  disease_rows.reserve(static_cast<std::size_t>(batch * nd));
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index d = 0; d < nd; ++d) disease_rows.push_back(b * f + ns + d);
  }
  Var ed = nn::gather_rows(tape, e, std::move(disease_rows));
  Var hd = nn::relu(tape, nn::add_row(tape, nn::matmul(tape, ed, tape.parameter(params_, "head.w1")),
                                      tape.parameter(params_, "head.b1")));
  Var score = nn::add_row(tape, nn::matmul(tape, hd, tape.parameter(params_, "head.w2")),
                          tape.parameter(params_, "head.b2"));
  out.logits = nn::reshape(tape, score, batch, nd);
  return out;
}

DiagLoss DiagModel::loss(nn::Tape& tape, const Tensor2& symptoms, const Tensor2& targets,
                         double normaliser, const Tensor2& prior,
                         const std::vector<double>& sample_weights) const {
  TapeOutputs out = forward(tape, symptoms);
  Var ce = nn::scale(tape, nn::softmax_cross_entropy_sum(tape, out.logits, targets), 1.0 / normaliser);
  DiagLoss result;
  result.cross_entropy = tape.value(ce)(0, 0);
  Var previous = tape.constant(prior);
  Var reg{};
  for (std::size_t j = 0; j < out.attentions.size(); ++j) {
    Var term = nn::kl_rows_mean(tape, previous, out.attentions[j], mask_, sample_weights);
    reg = j == 0 ? term : nn::add(tape, reg, term);
    previous = out.attentions[j];
  }
  result.attention_kl = tape.value(reg)(0, 0);
  result.total = nn::add(tape, ce, nn::scale(tape, reg, config_.kl_weight));
  return result;
}

Tensor2 DiagModel::predict(const Tensor2& symptoms) const {
  const auto ns = static_cast<Eigen::Index>(num_symptoms_);
  const auto nd = static_cast<Eigen::Index>(num_diseases_);
  const auto f = ns + nd;
  if (symptoms.cols() != ns) throw ContractError("diag predict: wrong number of symptom columns");
  const Eigen::Index batch = symptoms.rows();
  const Tensor2& emb = params_.value("embedding");
  const auto k = emb.cols();
  const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(config_.attention_dim));

  Tensor2 out(batch, nd);
  constexpr Eigen::Index kChunk = 16;
  Tensor2 logits(f, f);
  for (Eigen::Index start = 0; start < batch; start += kChunk) {
    const Eigen::Index n = std::min(kChunk, batch - start);
    Tensor2 e(n * f, k + 1);
    for (Eigen::Index b = 0; b < n; ++b) {
      e.block(b * f, 0, f, 1).setZero();
      e.block(b * f, 0, ns, 1) = symptoms.row(start + b).transpose();
      e.block(b * f, 1, f, k) = emb;
    }
    for (std::size_t j = 1; j <= config_.blocks; ++j) {
      const Tensor2 q = e * params_.value(block_name(j, "wq"));
      const Tensor2 kk = e * params_.value(block_name(j, "wk"));
      const Tensor2 v = e * params_.value(block_name(j, "wv"));
      Tensor2 h(n * f, v.cols());
      for (Eigen::Index b = 0; b < n; ++b) {
        logits.noalias() = q.middleRows(b * f, f) * kk.middleRows(b * f, f).transpose();
        logits = logits * inv_sqrt_c + mask_;
        nn::softmax_rows_inplace(logits);
        h.middleRows(b * f, f).noalias() = logits * v.middleRows(b * f, f);
      }
      Tensor2 h1 = h * params_.value(block_name(j, "mlp1.w"));
      h1.rowwise() += params_.value(block_name(j, "mlp1.b")).row(0);
      h1 = h1.cwiseMax(0.0);
      e = h1 * params_.value(block_name(j, "mlp2.w"));
      e.rowwise() += params_.value(block_name(j, "mlp2.b")).row(0);
    }
    for (Eigen::Index b = 0; b < n; ++b) {
      Tensor2 hd = e.block(b * f + ns, 0, nd, e.cols()) * params_.value("head.w1");
      hd.rowwise() += params_.value("head.b1").row(0);
      hd = hd.cwiseMax(0.0);
      Eigen::VectorXd score = hd * params_.value("head.w2");
      score.array() += params_.value("head.b2")(0, 0);
      score.array() = (score.array() - score.maxCoeff()).exp();
      out.row(start + b) = (score / score.sum()).transpose();
    }
  }
  nn::require_finite(out, "diag predict");
  return out;
}

DiagForward DiagModel::inspect(const std::vector<BinaryValue>& symptoms) const {
  if (symptoms.size() != num_symptoms_) throw ContractError("diag inspect: wrong input length");
  Tensor2 x(1, static_cast<Eigen::Index>(num_symptoms_));
  for (std::size_t i = 0; i < symptoms.size(); ++i) {
    if (symptoms[i] > 1) throw ContractError("diag inspect: symptom values must be 0 or 1");
    x(0, static_cast<Eigen::Index>(i)) = symptoms[i];
  }
  nn::Tape tape;
  TapeOutputs out = forward(tape, x);
  DiagForward result;
  const Tensor2& logits = tape.value(out.logits);
  Eigen::VectorXd p = (logits.row(0).array() - logits.maxCoeff()).exp().transpose();
  result.probabilities = p / p.sum();
  for (Var a : out.attentions) result.attentions.push_back(tape.value(a));
  result.final_embeddings = tape.value(out.final_embeddings);
  return result;
}

PredictiveSummary summarize_distributions(const Tensor2& distributions) {
  if (distributions.rows() < 2) {
    throw ContractError("summarize_predictions needs at least two samples to define a deviation");
  }
  PredictiveSummary s;
  s.n_samples = static_cast<std::size_t>(distributions.rows());
  s.mu = distributions.colwise().mean().transpose();
  const Tensor2 centered = distributions.rowwise() - s.mu.transpose();
  s.sigma = (centered.cwiseAbs2().colwise().sum() / static_cast<double>(distributions.rows()))
                .cwiseSqrt()
                .transpose();
  return s;
}

PredictiveSummary summarize_predictions(const DiagModel& model, const Tensor2& imputed) {
  if (imputed.rows() < 2) {
    throw ContractError("summarize_predictions needs at least two samples to define a deviation");
  }
  return summarize_distributions(model.predict(imputed));
}

void save_diag_model(const DiagModel& model, const std::filesystem::path& stem,
                     const std::string& kb_fingerprint) {
  const std::string bytes = nn::encode_tensors(nn::tensors_of(model.params()));
  auto bin = stem;
  bin += ".bin";
  write_text_file(bin, bytes);
  const auto& c = model.config();
  nlohmann::ordered_json side{{"model", "diagnosis"},
                              {"num_symptoms", model.num_symptoms()},
                              {"num_diseases", model.num_diseases()},
                              {"blocks", c.blocks},
                              {"embedding_dim", c.embedding_dim},
                              {"attention_dim", c.attention_dim},
                              {"mlp_hidden", c.mlp_hidden},
                              {"head_hidden", c.head_hidden},
                              {"kl_weight", c.kl_weight},
                              {"kb_fingerprint", kb_fingerprint},
                              {"checkpoint_fingerprint", fnv1a_hex(bytes)}};
  auto json = stem;
  json += ".json";
  write_text_file(json, side.dump(2) + "\n");
}

DiagModel load_diag_model(const std::filesystem::path& stem, const std::string& kb_fingerprint) {
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
  DiagConfig c;
  c.blocks = side.at("blocks").get<std::size_t>();
  c.embedding_dim = side.at("embedding_dim").get<std::size_t>();
  c.attention_dim = side.at("attention_dim").get<std::size_t>();
  c.mlp_hidden = side.at("mlp_hidden").get<std::size_t>();
  c.head_hidden = side.at("head_hidden").get<std::size_t>();
  c.kl_weight = side.at("kl_weight").get<double>();
  DiagModel model(side.at("num_symptoms").get<std::size_t>(), side.at("num_diseases").get<std::size_t>(), c);
  nn::assign_tensors(model.params(), nn::decode_tensors(bytes));
  return model;
}

}  // namespace bsoda
