#include "bsoda/cli/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "bsoda/simulator/simulator.hpp"

namespace bsoda {

namespace {

using Clock = std::chrono::steady_clock;

std::size_t rank_of(const PredictiveSummary& summary, DiseaseId truth) {
  const auto order = summary.ranking();
  return static_cast<std::size_t>(std::find(order.begin(), order.end(), truth) - order.begin());
}

Accuracy aggregate(const std::vector<double>& per_run, double per_record_p, std::size_t n_records) {
  Accuracy a;
  if (per_run.empty()) return a;
  a.mean = std::accumulate(per_run.begin(), per_run.end(), 0.0) / static_cast<double>(per_run.size());
  if (per_run.size() >= 2) {
    double ss = 0.0;
    for (double v : per_run) ss += (v - a.mean) * (v - a.mean);
    const double sd = std::sqrt(ss / static_cast<double>(per_run.size() - 1));
    a.half_width = 1.96 * sd / std::sqrt(static_cast<double>(per_run.size()));
  } else if (n_records > 0) {
    a.half_width = 100.0 * 1.96 * std::sqrt(per_record_p * (1.0 - per_record_p) / static_cast<double>(n_records));
  }
  return a;
}

}  // namespace

EvalResult evaluate(const Engine& engine, const Dataset& records, const EvalOptions& options) {
  const std::size_t n = options.max_records == 0 ? records.size() : std::min(options.max_records, records.size());
  const Rng root(options.seed);
  EvalResult result;
  std::vector<double> top[3];
  const std::size_t ks[3] = {1, 3, 5};
  double rounds_total = 0.0, seconds_total = 0.0;
  std::size_t steps_total = 0;

  for (std::size_t run = 0; run < std::max<std::size_t>(options.n_runs, 1); ++run) {
    std::size_t evaluated = 0, skipped = 0, hits[3] = {0, 0, 0};
    for (std::size_t i = 0; i < n; ++i) {
      const DatasetRecord& rec = records[i];
      const Rng stream = root.split(run).split(i);
      Rng report_rng = stream.split(0);
      const auto self = pick_self_report(rec, report_rng);
      if (!self) {
        ++skipped;
        continue;
      }
      SessionConfig sc = options.session;
      sc.seed = stream.split(1).seed();
      Session session(engine, sc, std::to_string(run) + ":" + std::to_string(i));

      RecordOutcome out;
      out.run = run;
      out.record = i;
      out.truth = rec.disease;
      out.self_report = *self;
      auto timed = [&](auto&& step) {
        const auto t0 = Clock::now();
        step();
        const double dt = std::chrono::duration<double>(Clock::now() - t0).count();
        out.seconds += dt;
        ++out.steps;
        if (!session.complete()) {
          out.inquiry_seconds += dt;
          ++out.inquiry_steps;
        }
      };
      timed([&] { session.start({{*self, 1}}); });
      while (!session.complete()) {
        const SymptomId q = *session.pending();
        timed([&] { session.answer(q, rec.has_symptom(q) ? 1 : 0); });
      }

      const SessionRecord& sr = session.record();
      if (options.compare_unpruned) {
        // Re-derive each round's evidence and compare argmax with pruning off.
        RewardConfig unpruned = session.config().reward;
        unpruned.enable_pruning = false;
        EvidenceState state = initial_evidence(sr.initial, engine.cooccurrence, unpruned.enable_filtering);
        const Rng session_root(sc.seed);
        for (const RoundRecord& r : sr.rounds) {
          if (r.asked) state = update_candidates(state, engine.cooccurrence, *r.asked, *r.answer, unpruned.enable_filtering);
          if (!r.rewards) continue;
          Rng reward_rng = session_root.split(2 * r.round);
          const RewardBreakdown b = candidate_rewards(engine.vae, engine.diag, state, unpruned, reward_rng);
          ++out.pruned_comparisons;
          if (select_next(b) == *r.question) ++out.pruned_agreements;
        }
      }
      out.inquiries = sr.inquiries();
      out.reason = *sr.termination;
      for (const RoundRecord& r : sr.rounds) out.rank_by_round.push_back(rank_of(r.diagnosis, rec.disease));
      const std::size_t final_rank = out.rank_by_round.back();
      for (int k = 0; k < 3; ++k) hits[k] += final_rank < ks[k] ? 1 : 0;
      ++result.report.reasons[to_string(out.reason)];
      rounds_total += static_cast<double>(out.inquiries);
      seconds_total += out.inquiry_seconds;
      steps_total += out.inquiry_steps;
      ++evaluated;
      if (options.keep_transcripts) result.transcripts.push_back(sr);
      result.outcomes.push_back(std::move(out));
    }
    for (int k = 0; k < 3; ++k) {
      top[k].push_back(evaluated ? 100.0 * static_cast<double>(hits[k]) / static_cast<double>(evaluated) : 0.0);
    }
    result.report.evaluated = evaluated;
    result.report.skipped = skipped;
  }

  EvalReport& rep = result.report;
  rep.n_runs = std::max<std::size_t>(options.n_runs, 1);
  Accuracy* acc[3] = {&rep.top1, &rep.top3, &rep.top5};
  for (int k = 0; k < 3; ++k) {
    const double mean = top[k].empty() ? 0.0 : std::accumulate(top[k].begin(), top[k].end(), 0.0) / static_cast<double>(top[k].size());
    *acc[k] = aggregate(top[k], mean / 100.0, rep.evaluated);
  }
  const double sessions = static_cast<double>(result.outcomes.size());
  rep.mean_rounds = sessions > 0 ? rounds_total / sessions : 0.0;
  rep.seconds_per_inquiry = steps_total > 0 ? seconds_total / static_cast<double>(steps_total) : 0.0;
  return result;
}

std::vector<CurvePoint> accuracy_curve(const std::vector<RecordOutcome>& outcomes, const std::vector<std::size_t>& budgets) {
  std::vector<CurvePoint> curve;
  for (std::size_t b : budgets) {
    CurvePoint p;
    p.budget = b;
    for (const auto& o : outcomes) {
      const std::size_t r = o.rank_by_round[std::min(b, o.rank_by_round.size() - 1)];
      p.top1 += r < 1 ? 1.0 : 0.0;
      p.top3 += r < 3 ? 1.0 : 0.0;
      p.top5 += r < 5 ? 1.0 : 0.0;
    }
    const double n = outcomes.empty() ? 1.0 : static_cast<double>(outcomes.size());
    p.top1 *= 100.0 / n;
    p.top3 *= 100.0 / n;
    p.top5 *= 100.0 / n;
    curve.push_back(p);
  }
  return curve;
}

std::string to_string(BenchArm arm) {
  switch (arm) {
    case BenchArm::Full: return "full";
    case BenchArm::NoApproximation: return "no_approximation";
    case BenchArm::NoApproximationNoFiltering: return "no_approximation_no_filtering";
  }
  return "unknown";
}

std::optional<BenchArm> parse_bench_arm(std::string_view text) {
  for (BenchArm a : {BenchArm::Full, BenchArm::NoApproximation, BenchArm::NoApproximationNoFiltering}) {
    if (text == to_string(a)) return a;
  }
  return std::nullopt;
}

SessionConfig arm_config(BenchArm arm, const SessionConfig& base) {
  SessionConfig c = base;
  if (arm != BenchArm::Full) c.reward.mode = RewardMode::MonteCarlo;
  if (arm == BenchArm::NoApproximationNoFiltering) c.reward.enable_filtering = false;
  return c;
}

std::vector<BenchRow> bench(const Engine& engine, const Dataset& records, const std::vector<BenchArm>& arms,
                            const EvalOptions& options) {
  std::vector<BenchRow> rows;
  for (BenchArm arm : arms) {
    EvalOptions o = options;
    o.session = arm_config(arm, options.session);
    o.keep_transcripts = true;
    o.compare_unpruned = false;
    const EvalResult r = evaluate(engine, records, o);
    BenchRow row;
    row.arm = arm;
    double seconds = 0.0, candidates = 0.0, combinations = 0.0, reward_rounds = 0.0, cands_total = 0.0;
    for (const auto& out : r.outcomes) {
      seconds += out.inquiry_seconds;
      row.steps += out.inquiry_steps;
    }
    for (const auto& t : r.transcripts) {
      for (const auto& round : t.rounds) {
        if (!round.rewards) continue;
        reward_rounds += 1.0;
        candidates += static_cast<double>(round.rewards->candidates.size());
        for (const auto& c : round.rewards->candidates) combinations += static_cast<double>(c.combinations.size());
        cands_total += static_cast<double>(round.rewards->candidates.size());
      }
    }
    row.seconds_per_inquiry = row.steps ? seconds / static_cast<double>(row.steps) : 0.0;
    row.mean_candidates = reward_rounds > 0 ? candidates / reward_rounds : 0.0;
    row.mean_combinations = cands_total > 0 ? combinations / cands_total : 0.0;
    rows.push_back(row);
  }
  return rows;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ContractError("spearman: need two equal-length series of length >= 2");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

nlohmann::ordered_json report_to_json(const EvalReport& report) {
  auto acc = [](const Accuracy& a) { return nlohmann::ordered_json{{"mean", a.mean}, {"ci95", a.half_width}}; };
  nlohmann::ordered_json reasons = nlohmann::ordered_json::object();
  for (const auto& [k, v] : report.reasons) reasons[k] = v;
  return {{"top1", acc(report.top1)},     {"top3", acc(report.top3)},   {"top5", acc(report.top5)},
          {"mean_rounds", report.mean_rounds}, {"termination", reasons}, {"evaluated", report.evaluated},
          {"skipped", report.skipped},     {"runs", report.n_runs}};
}

nlohmann::ordered_json curve_to_json(const std::vector<CurvePoint>& curve) {
  nlohmann::ordered_json out = {{"budget", nlohmann::ordered_json::array()},
                                {"top1", nlohmann::ordered_json::array()},
                                {"top3", nlohmann::ordered_json::array()},
                                {"top5", nlohmann::ordered_json::array()}};
  for (const auto& p : curve) {
    out["budget"].push_back(p.budget);
    out["top1"].push_back(p.top1);
    out["top3"].push_back(p.top3);
    out["top5"].push_back(p.top5);
  }
  return out;
}

std::string curve_to_csv(const std::vector<CurvePoint>& curve) {
  std::ostringstream os;
  os << "budget,top1,top3,top5\n";
  for (const auto& p : curve) os << p.budget << ',' << p.top1 << ',' << p.top3 << ',' << p.top5 << '\n';
  return os.str();
}

nlohmann::ordered_json bench_to_json(const std::vector<BenchRow>& rows) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    out.push_back({{"arm", to_string(r.arm)},
                   {"seconds_per_inquiry", r.seconds_per_inquiry},
                   {"steps", r.steps},
                   {"mean_candidates", r.mean_candidates},
                   {"mean_combinations_per_candidate", r.mean_combinations}});
  }
  return out;
}

std::string format_report(const EvalReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "records %zu (skipped %zu), runs %zu\n"
                "Top1 %6.2f +- %.2f\nTop3 %6.2f +- %.2f\nTop5 %6.2f +- %.2f\n"
                "mean rounds %.2f, %.4f s per inquiry\n",
                r.evaluated, r.skipped, r.n_runs, r.top1.mean, r.top1.half_width, r.top3.mean, r.top3.half_width,
                r.top5.mean, r.top5.half_width, r.mean_rounds, r.seconds_per_inquiry);
  std::string out = buf;
  for (const auto& [k, v] : r.reasons) out += "  " + k + ": " + std::to_string(v) + "\n";
  return out;
}

SessionRecord transcript_from_json(const nlohmann::json& j, const KnowledgeBase& kb) {
  auto symptom = [&](const nlohmann::json& code) {
    const auto s = kb.find_symptom(code.get<std::string>());
    if (!s) throw ValidationError("transcript: unknown symptom " + code.get<std::string>());
    return *s;
  };
  SessionRecord rec;
  try {
    rec.id = j.at("id").get<std::string>();
    rec.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& i : j.at("initial")) rec.initial.emplace_back(symptom(i.at("symptom")), i.at("present").get<bool>() ? 1 : 0);
    for (const auto& r : j.at("rounds")) {
      RoundRecord rr;
      rr.round = r.at("round").get<std::size_t>();
      if (!r.at("asked").is_null()) {
        rr.asked = symptom(r.at("asked"));
        rr.answer = r.at("answer").get<bool>() ? 1 : 0;
      }
      rec.rounds.push_back(std::move(rr));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("transcript: ") + e.what());
  }
  return rec;
}

}  // namespace bsoda
