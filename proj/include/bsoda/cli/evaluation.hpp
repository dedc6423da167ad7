#ifndef BSODA_CLI_EVALUATION_HPP
#define BSODA_CLI_EVALUATION_HPP

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsoda/session/session.hpp"

namespace bsoda {

struct EvalOptions {
  SessionConfig session{};
  std::size_t n_runs = 1;
  std::size_t max_records = 0;  // 0 means all
  std::uint64_t seed = 0;
  bool keep_transcripts = false;
  /// Also compute the unpruned argmax every round and count agreements.
  bool compare_unpruned = false;
};

/// One simulated consultation scored against the record's disease.
struct RecordOutcome {
  std::size_t run = 0;
  std::size_t record = 0;
  DiseaseId truth;
  SymptomId self_report;
  std::size_t inquiries = 0;
  TerminationReason reason = TerminationReason::Budget;
  std::vector<std::size_t> rank_by_round;  // 0-based rank of the truth after each round
  std::size_t pruned_agreements = 0;       // rounds where pruned and unpruned choices agree
  std::size_t pruned_comparisons = 0;
  double seconds = 0.0;
  std::size_t steps = 0;  // session steps timed (intake plus one per answer)
  double inquiry_seconds = 0.0;  // steps that ended by choosing a question
  std::size_t inquiry_steps = 0;
};

struct Accuracy {
  double mean = 0.0;       // percent
  double half_width = 0.0;  // 95% interval, percent
};

struct EvalReport {
  Accuracy top1, top3, top5;
  double mean_rounds = 0.0;
  std::map<std::string, std::size_t> reasons;
  std::size_t evaluated = 0;  // per run
  std::size_t skipped = 0;    // records with no positive symptom
  std::size_t n_runs = 0;
  double seconds_per_inquiry = 0.0;  // wall time; excluded from the deterministic JSON
};

struct EvalResult {
  EvalReport report;
  std::vector<RecordOutcome> outcomes;
  std::vector<SessionRecord> transcripts;
};

/// Sessions against the simulated patient, who answers 1 iff the asked
/// symptom is among the record's positives. Record i of run r draws its
/// self-report and session seed from stream (r, i) of options.seed.
EvalResult evaluate(const Engine& engine, const Dataset& records, const EvalOptions& options);

/// Top-k accuracy (percent) after each budget, from per-round ranks. A
/// session that ended before a budget keeps its final ranking.
struct CurvePoint {
  std::size_t budget = 0;
  double top1 = 0.0, top3 = 0.0, top5 = 0.0;
};
std::vector<CurvePoint> accuracy_curve(const std::vector<RecordOutcome>& outcomes, const std::vector<std::size_t>& budgets);

enum class BenchArm { Full, NoApproximation, NoApproximationNoFiltering };
std::string to_string(BenchArm arm);
std::optional<BenchArm> parse_bench_arm(std::string_view text);
/// Session configuration of an arm, derived from a base configuration.
SessionConfig arm_config(BenchArm arm, const SessionConfig& base);

struct BenchRow {
  BenchArm arm;
  double seconds_per_inquiry = 0.0;
  std::size_t steps = 0;  // steps that chose a question
  double mean_candidates = 0.0;
  double mean_combinations = 0.0;  // per candidate
};

/// Mean wall time of the steps that choose a question, for each arm on the
/// same records and seeds. Steps that terminate are not counted.
std::vector<BenchRow> bench(const Engine& engine, const Dataset& records, const std::vector<BenchArm>& arms,
                            const EvalOptions& options);

/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

nlohmann::ordered_json report_to_json(const EvalReport& report);
nlohmann::ordered_json curve_to_json(const std::vector<CurvePoint>& curve);
std::string curve_to_csv(const std::vector<CurvePoint>& curve);
nlohmann::ordered_json bench_to_json(const std::vector<BenchRow>& rows);
std::string format_report(const EvalReport& report);

/// Parses a transcript produced by session_to_json back into initial
/// reports and answers, enough for replay.
SessionRecord transcript_from_json(const nlohmann::json& j, const KnowledgeBase& kb);

}  // namespace bsoda

#endif  // BSODA_CLI_EVALUATION_HPP
