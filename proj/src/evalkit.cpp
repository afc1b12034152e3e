#include "planrank/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace planrank {

namespace {

int chosen_for(const std::map<std::string, int>& decisions, const CandidateSet& cs) {
    auto it = decisions.find(cs.query_id);
    if (it == decisions.end())
        throw MissingQueryError("no decision recorded for query " + cs.query_id);
    if (it->second < 0 || it->second >= static_cast<int>(cs.size()))
        throw MissingQueryError("decision for query " + cs.query_id +
                                " references a plan outside its candidate set");
    return it->second;
}

}  // namespace

double top_k_accuracy(const std::map<std::string, int>& decisions,
                      const std::vector<CandidateSet>& truth, int k) {
    if (truth.empty()) throw MissingQueryError("empty evaluation set");
    if (k < 1) throw std::invalid_argument("k must be positive");
    std::size_t hits = 0;
    for (const auto& cs : truth)
        if (cs.true_ranks[chosen_for(decisions, cs)] <= k) ++hits;
    return 100.0 * static_cast<double>(hits) / static_cast<double>(truth.size());
}

double cumulative_time(const std::map<std::string, int>& decisions,
                       const std::vector<CandidateSet>& truth) {
    double total = 0.0;
    for (const auto& cs : truth) total += cs.mean_latency_ms[chosen_for(decisions, cs)];
    return total;
}

EvalReport compare_policies(const std::vector<CandidateSet>& test_set,
                            const ModelCheckpoint& ckpt, const OodDetector& det,
                            const Thresholds& th, int k, bool force_degraded) {
    if (test_set.empty()) throw MissingQueryError("empty evaluation set");

    std::map<std::string, std::map<std::string, int>> decisions;  // policy -> query -> index
    int fallbacks = 0;

    EvalReport report;
    for (const auto& cs : test_set) {
        ScoreMatrix scores = score_candidates(ckpt, cs);
        RankedList ranked = decode_permutation(scores);
        DecisionOutcome hybrid = hybrid_select(ranked, cs, ckpt, det, th,
                                               std::min<int>(k, static_cast<int>(cs.size())),
                                               force_degraded);
        if (hybrid.source == DecisionOutcome::Source::CboFallback) ++fallbacks;

        decisions[kPolicyModelTop1][cs.query_id] = ranked.by_position[0];
        decisions[kPolicyHybrid][cs.query_id] = hybrid.chosen_index;
        decisions[kPolicyCboSim][cs.query_id] = cs.cbo_index;
        decisions[kPolicyOracleBest][cs.query_id] = cs.plan_at_rank(1);
    }

    double best_total = 0.0;
    for (const auto& cs : test_set) best_total += cs.mean_latency_ms[cs.plan_at_rank(1)];

    for (const char* name :
         {kPolicyModelTop1, kPolicyHybrid, kPolicyCboSim, kPolicyOracleBest}) {
        PolicyResult pr;
        pr.name = name;
        pr.top_1 = top_k_accuracy(decisions[name], test_set, 1);
        pr.top_2 = top_k_accuracy(decisions[name], test_set, 2);
        pr.top_3 = top_k_accuracy(decisions[name], test_set, 3);
        pr.cumulative_ms = cumulative_time(decisions[name], test_set);
        if (pr.name == kPolicyHybrid) pr.fallback_count = fallbacks;
        report.policies.push_back(std::move(pr));
    }

    for (const auto& cs : test_set) {
        EvalReport::Row row;
        row.query_id = cs.query_id;
        row.best_latency_ms = cs.mean_latency_ms[cs.plan_at_rank(1)];
        for (const char* name :
             {kPolicyModelTop1, kPolicyHybrid, kPolicyCboSim, kPolicyOracleBest}) {
            int idx = decisions[name][cs.query_id];
            EvalReport::PolicyPick pick;
            pick.chosen_index = idx;
            pick.chosen_plan_id = cs.plans[idx].plan_id;
            pick.latency_ms = cs.mean_latency_ms[idx];
            pick.regret_ms = pick.latency_ms - row.best_latency_ms;
            pick.true_rank = cs.true_ranks[idx];
            row.picks[name] = std::move(pick);
        }
        report.rows.push_back(std::move(row));
    }

    (void)best_total;
    report.footnotes.push_back(
        "cbo_sim top-k rates are reported because synthetic ground-truth ranks are known for "
        "every plan, including the simulated optimizer's pick.");
    return report;
}

std::string render_report_table(const EvalReport& report) {
    std::ostringstream out;
    out << "policy        top-1     top-2     top-3     total time (ms)\n";
    out << "-----------  -------  -------  -------  -----------------\n";
    char line[160];
    for (const auto& p : report.policies) {
        std::snprintf(line, sizeof(line), "%-12s %6.2f%%  %6.2f%%  %6.2f%%  %17.3f", p.name.c_str(),
                      p.top_1, p.top_2, p.top_3, p.cumulative_ms);
        out << line;
        if (p.name == kPolicyHybrid) out << "  (" << p.fallback_count << " fallbacks)";
        out << '\n';
    }
    for (const auto& note : report.footnotes) out << "note: " << note << '\n';
    return out.str();
}

nlohmann::ordered_json report_to_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["format_version"] = 1;
    auto policies = nlohmann::ordered_json::array();
    for (const auto& p : report.policies) {
        nlohmann::ordered_json pj;
        pj["name"] = p.name;
        pj["top_1"] = p.top_1;
        pj["top_2"] = p.top_2;
        pj["top_3"] = p.top_3;
        pj["cumulative_time_ms"] = p.cumulative_ms;
        if (p.name == kPolicyHybrid) pj["fallback_count"] = p.fallback_count;
        policies.push_back(std::move(pj));
    }
    j["policies"] = std::move(policies);

    auto rows = nlohmann::ordered_json::array();
    for (const auto& row : report.rows) {
        nlohmann::ordered_json rj;
        rj["query_id"] = row.query_id;
        rj["best_latency_ms"] = row.best_latency_ms;
        nlohmann::ordered_json picks;
        for (const auto& [name, pick] : row.picks)
            picks[name] = {{"chosen_plan_id", pick.chosen_plan_id},
                           {"chosen_index", pick.chosen_index},
                           {"latency_ms", pick.latency_ms},
                           {"regret_ms", pick.regret_ms},
                           {"true_rank", pick.true_rank}};
        rj["picks"] = std::move(picks);
        rows.push_back(std::move(rj));
    }
    j["queries"] = std::move(rows);
    j["footnotes"] = report.footnotes;
    return j;
}

}  // namespace planrank
