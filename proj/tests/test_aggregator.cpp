#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "nlrl/aggregator.hpp"
#include "nlrl/env.hpp"

using namespace nlrl;

namespace {

OneStepOutcome lake_outcome(const std::string& state, const std::string& action,
                            const std::string& next, const std::string& label, bool terminal,
                            bool intended, const LanguageValue& next_value) {
    OneStepOutcome o;
    o.action = 0;
    o.action_name = action;
    o.reward = label == "goal" ? 1.0 : 0.0;
    o.next = 0;
    o.next_name = next;
    o.next_label = label;
    o.next_terminal = terminal;
    o.intended = intended;
    o.probability = 1.0 / 3.0;
    o.description = "move description";
    o.next_value = next_value;
    o.state_name = state;
    return o;
}

ConceptEvaluation doc_with(const std::string& safest, const std::string& immediate = "None",
                           const std::string& future = "None") {
    ConceptEvaluation c;
    c.safest_path = safest;
    c.immediate_risk = immediate;
    c.future_risk = future;
    return c;
}

}  // namespace

TEST_CASE("path grammar round trip") {
    auto plan = parse_concept_path("(4,1) -> Move right -> (4,2) -> Move down -> (6,2), this is the goal");
    REQUIRE(plan.has_value());
    CHECK(plan->ends_at_goal);
    CHECK(plan->moves() == 2);
    CHECK(plan->states.front() == "(4,1)");
    CHECK(plan->states.back() == "(6,2)");

    auto risk = parse_concept_path("(4,1) -> Move left -> (4,0) (hole), distance is 1");
    REQUIRE(risk.has_value());
    CHECK(risk->ends_at_hole);
    CHECK(risk->moves() == 1);

    auto terminal = parse_concept_path("(b) -> Move Left -> (f), this is the terminal state");
    REQUIRE(terminal.has_value());
    CHECK(terminal->ends_at_goal);

    CHECK_FALSE(parse_concept_path("None").has_value());
    CHECK_FALSE(parse_concept_path("(a) -> dangling ->").has_value());
}

TEST_CASE("score_concepts ranks and lengths") {
    CHECK(score_concepts(doc_with("None")).rank == ConceptScore::unknown);
    CHECK(score_concepts(doc_with("None", "None", "risk entry")).rank ==
          ConceptScore::future_risk);

    ConceptScore goal = score_concepts(
        doc_with("(4,1) -> Move right -> (4,2) -> Move down -> (6,2), this is the goal"));
    CHECK(goal.rank == ConceptScore::reaches_goal);
    CHECK(goal.path_length == 2);

    // Immediate risk dominates everything else.
    ConceptScore risky = score_concepts(
        doc_with("(4,1) -> Move right -> (4,2) -> Move down -> (6,2), this is the goal",
                 "(4,1) -> Move left -> (4,0) (hole), distance is 1"));
    CHECK(risky.rank == ConceptScore::immediate_risk);
    CHECK(risky.path_length == 2);

    ConceptScore progress = score_concepts(doc_with("(4,1) -> Move right -> (4,2)"));
    CHECK(progress.rank == ConceptScore::safe_progress);
    CHECK(progress.path_length == 1);

    ConceptScore garbled = score_concepts(doc_with("take the scenic route"));
    CHECK(garbled.rank == ConceptScore::unknown);
    CHECK(garbled.warning);
}

TEST_CASE("concept_fuse extends plans through the intended outcome only") {
    ConceptEvaluation successor;
    successor.important_states = "(6,2) (goal)";
    successor.safest_path = "(4,2) -> Move down -> (6,2), this is the goal";

    LanguageValue next = LanguageValue::from_concepts(successor, Provenance::td_update, 1);
    ConceptEvaluation fused = concept_fuse(
        lake_outcome("(4,1)", "Move right", "(4,2)", "", false, /*intended=*/true, next));
    CHECK(fused.safest_path ==
          "(4,1) -> Move right -> (4,2) -> Move down -> (6,2), this is the goal");
    CHECK(fused.immediate_risk == "None");
    // The goal's position lands in important_states once the plan survives a
    // join.
    ConceptEvaluation joined = concept_join("(4,1)", {FusedItem{1.0, fused}});
    CHECK(joined.important_states == "(6,2) (goal)");

    // Same landing via a slip: risks would flow, but the plan does not, and
    // with no plan or risk recorded the document stays empty.
    ConceptEvaluation slipped = concept_fuse(
        lake_outcome("(4,1)", "Move up", "(4,2)", "", false, /*intended=*/false, next));
    CHECK(slipped.safest_path == "None");
    CHECK(slipped.important_states == "None");
}

TEST_CASE("concept_fuse records risks from every outcome") {
    LanguageValue hole_marker = LanguageValue::terminal_value("hole");
    ConceptEvaluation direct = concept_fuse(
        lake_outcome("(4,1)", "Move left", "(4,0)", "hole", true, /*intended=*/true, hole_marker));
    CHECK(direct.immediate_risk == "(4,1) -> Move left -> (4,0) (hole), distance is 1");
    CHECK(direct.safest_path == "(4,1) -> Move left -> (4,0) (hole)");
    CHECK(direct.important_states == "(4,0) (hole)");

    ConceptEvaluation slipped = concept_fuse(
        lake_outcome("(2,2)", "Move up", "(2,3)", "hole", true, /*intended=*/false, hole_marker));
    CHECK(slipped.immediate_risk == "(2,2) -> Move up -> (2,3) (hole), distance is 1");
    CHECK(slipped.safest_path == "None");
}

TEST_CASE("concept_fuse shifts successor risks one step deeper") {
    ConceptEvaluation successor;
    successor.important_states = "(1,1) (hole)";
    successor.immediate_risk = "(1,2) -> Move left -> (1,1) (hole), distance is 1";
    LanguageValue next = LanguageValue::from_concepts(successor, Provenance::td_update, 1);
    ConceptEvaluation fused =
        concept_fuse(lake_outcome("(0,2)", "Move down", "(1,2)", "", false, true, next));
    CHECK(fused.immediate_risk == "None");
    CHECK(fused.future_risk ==
          "(0,2) -> Move down -> (1,2) -> Move left -> (1,1) (hole), distance is 2");

    // A hole-terminated successor plan is not extended; the risk flow covers it.
    ConceptEvaluation dead_end;
    dead_end.safest_path = "(1,2) -> Move left -> (1,1) (hole)";
    dead_end.immediate_risk = "(1,2) -> Move left -> (1,1) (hole), distance is 1";
    LanguageValue dead = LanguageValue::from_concepts(dead_end, Provenance::td_update, 1);
    ConceptEvaluation fused2 =
        concept_fuse(lake_outcome("(0,2)", "Move down", "(1,2)", "", false, true, dead));
    CHECK(fused2.safest_path == "None");
}

TEST_CASE("concept_fuse keeps uninformative successors empty and rejects free text") {
    ConceptEvaluation fused = concept_fuse(lake_outcome(
        "(1,0)", "Move left", "(1,0)", "", false, true, LanguageValue::initial_value()));
    CHECK(fused.safest_path == "None");
    CHECK(fused.future_risk == "None");
    CHECK(fused.important_states == "None");

    LanguageValue chatty = LanguageValue::from_text("some prose", Provenance::td_update, 1);
    CHECK_THROWS_AS(
        concept_fuse(lake_outcome("(1,0)", "Move left", "(1,0)", "", false, true, chatty)),
        ModeMismatchError);
}

TEST_CASE("concept_join unions, selects the shortest safe plan, and records ties") {
    FusedItem via_left{0.5, doc_with("(g) -> Move Left -> (k) -> Move Left -> (b) -> Move Left "
                                     "-> (f), this is the terminal state")};
    FusedItem via_down{0.5, doc_with("(g) -> Go Down -> (w) -> Go Down -> (n) -> Go Down -> (x), "
                                     "this is the terminal state")};
    ConceptEvaluation joined = concept_join("(g)", {via_left, via_down});
    CHECK(joined.safest_path == via_left.eval.safest_path);  // first-wins tie
    CHECK(joined.final_evaluation.find("2 equally short safe routes") != std::string::npos);
    CHECK(joined.final_evaluation.find("Go Down") != std::string::npos);

    CHECK_THROWS_AS(concept_join("(g)", {}), UsageError);
}

TEST_CASE("concept_join risk handling") {
    FusedItem risky1{0.5, doc_with("(a) -> m -> (h) (hole)",
                                   "(a) -> m -> (h) (hole), distance is 1")};
    FusedItem risky2{0.5, doc_with("None", "(a) -> n -> (h2) (hole), distance is 1")};
    ConceptEvaluation joined = concept_join("(a)", {risky1, risky2});
    CHECK(score_concepts(joined).rank == ConceptScore::immediate_risk);
    CHECK(joined.final_evaluation.find("fail in one step") != std::string::npos);
    // The shortest recorded failure stands in for the missing plan.
    CHECK(joined.safest_path == "(a) -> m -> (h) (hole)");
    // Both risks recorded.
    CHECK(joined.immediate_risk.find("(h) (hole)") != std::string::npos);
    CHECK(joined.immediate_risk.find("(h2) (hole)") != std::string::npos);

    // A goal plan crossing a known hole is rejected.
    FusedItem bad_plan{0.5, doc_with("(a) -> m -> (h) -> n -> (g), this is the goal")};
    ConceptEvaluation filtered = concept_join("(a)", {risky1, bad_plan});
    CHECK(filtered.safest_path != bad_plan.eval.safest_path);
}

TEST_CASE("concept_join is permutation invariant up to tie ordering") {
    std::vector<FusedItem> items = {
        {0.25, doc_with("(a) -> m -> (b) -> n -> (g), this is the goal")},
        {0.25, doc_with("None", "None", "(a) -> x -> (h) (hole), distance is 2")},
        {0.25, doc_with("(a) -> p -> (g), this is the goal")},
        {0.25, doc_with("None")},
    };
    ConceptEvaluation forward = concept_join("(a)", items);
    std::vector<FusedItem> reversed(items.rbegin(), items.rend());
    ConceptEvaluation backward = concept_join("(a)", reversed);
    // Unique path lengths: the full document is order independent.
    CHECK(forward == backward);

    // Set-union fields are order independent even under ties.
    std::mt19937_64 rng(7);
    std::vector<FusedItem> tied = {
        {0.5, doc_with("(a) -> m -> (g), this is the goal")},
        {0.5, doc_with("(a) -> n -> (g), this is the goal")},
    };
    ConceptEvaluation first = concept_join("(a)", tied);
    std::shuffle(tied.begin(), tied.end(), rng);
    ConceptEvaluation second = concept_join("(a)", tied);
    CHECK(first.important_states == second.important_states);
    CHECK(first.immediate_risk == second.immediate_risk);
    CHECK(first.future_risk == second.future_risk);
    CHECK(score_concepts(first).path_length == score_concepts(second).path_length);
}

TEST_CASE("singleton join preserves the concept score") {
    std::vector<ConceptEvaluation> docs = {
        doc_with("(a) -> m -> (g), this is the goal"),
        doc_with("(a) -> m -> (h) (hole)", "(a) -> m -> (h) (hole), distance is 1"),
        doc_with("None", "None", "(a) -> m -> (b) -> n -> (h) (hole), distance is 2"),
        doc_with("None"),
    };
    for (const ConceptEvaluation& doc : docs) {
        ConceptEvaluation joined = concept_join("(a)", {FusedItem{1.0, doc}});
        CHECK(score_concepts(joined).rank == score_concepts(doc).rank);
        CHECK(score_concepts(joined).path_length == score_concepts(doc).path_length);
    }
}

TEST_CASE("deterministic improvement follows (rank, then path length)") {
    std::vector<std::pair<std::string, ConceptEvaluation>> actions = {
        {"Go Up", doc_with("None")},
        {"Move Left", doc_with("(g) -> Move Left -> (k) -> Move Left -> (b) -> Move Left -> (f), "
                               "this is the terminal state")},
        {"Go Down", doc_with("(g) -> Go Down -> (w) -> Go Down -> (n) -> Go Down -> (x), this is "
                             "the terminal state")},
        {"Move Right", doc_with("None")},
    };
    ImprovementResult r = improve_policy_deterministic("(g)", actions);
    CHECK(r.dist == std::vector<double>{0.0, 0.5, 0.5, 0.0});
    CHECK(r.thought.find("Move Left") != std::string::npos);

    // One clean route beats everything that can fail immediately.
    std::vector<std::pair<std::string, ConceptEvaluation>> mixed = {
        {"Move up", doc_with("(s) -> Move up -> (g), this is the goal")},
        {"Move left", doc_with("None", "(s) -> Move left -> (h) (hole), distance is 1")},
        {"Move down", doc_with("None", "(s) -> Move down -> (h) (hole), distance is 1")},
    };
    ImprovementResult point = improve_policy_deterministic("(s)", mixed);
    CHECK(point.dist == std::vector<double>{1.0, 0.0, 0.0});

    // All unknown: uniform fallback with an explicit thought.
    std::vector<std::pair<std::string, ConceptEvaluation>> unknown = {
        {"Move up", doc_with("None")},
        {"Move left", doc_with("None")},
        {"Move down", doc_with("None")},
        {"Move right", doc_with("None")},
    };
    ImprovementResult fallback = improve_policy_deterministic("(s)", unknown);
    CHECK(fallback.dist == std::vector<double>(4, 0.25));
    CHECK(fallback.thought.find("Insufficient information") != std::string::npos);

    CHECK_THROWS_AS(improve_policy_deterministic("(s)", {}), UsageError);
}

TEST_CASE("improvement never keeps an immediately risky action beside a clean one") {
    // Exhaustive over the default lake map with a fully informed table: every
    // state where some action avoids one-step failure must drop the others.
    EnvModel lake = build_env(EnvSpec{FrozenLakeSpec{}});
    for (StateId s = 0; s < lake.mdp.state_count(); ++s) {
        if (lake.mdp.is_terminal(s)) continue;
        std::vector<std::pair<std::string, ConceptEvaluation>> docs;
        std::vector<bool> risky;
        for (ActionId a : lake.mdp.actions[static_cast<size_t>(s)]) {
            bool has_hole = false;
            std::vector<FusedItem> items;
            for (const Outcome& o : enumerate_outcomes(lake.mdp, s, a)) {
                OneStepOutcome out = lake_outcome(
                    lake.lexicon.name(s), lake.mdp.action_name(a), lake.lexicon.name(o.next),
                    lake.mdp.labels[static_cast<size_t>(o.next)], o.terminal, o.intended,
                    o.terminal
                        ? LanguageValue::terminal_value(lake.mdp.labels[static_cast<size_t>(o.next)])
                        : LanguageValue::initial_value());
                if (out.next_label == "hole") has_hole = true;
                items.push_back(FusedItem{o.probability, concept_fuse(out)});
            }
            docs.emplace_back(lake.mdp.action_name(a),
                              concept_join(lake.lexicon.name(s), items));
            risky.push_back(has_hole);
        }
        ImprovementResult improved = improve_policy_deterministic(lake.lexicon.name(s), docs);
        bool any_clean = std::find(risky.begin(), risky.end(), false) != risky.end();
        if (any_clean) {
            for (size_t i = 0; i < risky.size(); ++i) {
                if (risky[i]) CHECK(improved.dist[i] == 0.0);
            }
        }
    }
}

TEST_CASE("argmax depends only on the score ordering") {
    // Recomputing the argmax from sorted (rank, length) pairs must agree with
    // the improvement operator for randomly generated documents.
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> kind(0, 3);
    std::uniform_int_distribution<int> len(1, 5);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::pair<std::string, ConceptEvaluation>> docs;
        int n = 2 + trial % 3;
        for (int i = 0; i < n; ++i) {
            std::string name = "a" + std::to_string(i);
            switch (kind(rng)) {
                case 0: docs.emplace_back(name, doc_with("None")); break;
                case 1: {
                    std::string path = "(s)";
                    int moves = len(rng);
                    for (int m = 0; m < moves; ++m) path += " -> go -> (s" + std::to_string(m) + ")";
                    docs.emplace_back(name, doc_with(path + ", this is the goal"));
                    break;
                }
                case 2:
                    docs.emplace_back(name,
                                      doc_with("None", "(s) -> go -> (h) (hole), distance is 1"));
                    break;
                default:
                    docs.emplace_back(name, doc_with("None", "None",
                                                     "(s) -> go -> (x) -> go -> (h) (hole), "
                                                     "distance is 2"));
                    break;
            }
        }
        ImprovementResult got = improve_policy_deterministic("(s)", docs);

        auto key = [&](const ConceptEvaluation& c) {
            ConceptScore sc = score_concepts(c);
            long long length = sc.path_length ? *sc.path_length : 1000000;
            return std::pair<int, long long>(-static_cast<int>(sc.rank), length);
        };
        std::pair<int, long long> best = key(docs[0].second);
        for (const auto& [name, doc] : docs) best = std::min(best, key(doc));
        for (size_t i = 0; i < docs.size(); ++i) {
            if (key(docs[i].second) == best) {
                CHECK(got.dist[i] > 0.0);
            } else {
                CHECK(got.dist[i] == 0.0);
            }
        }
    }
}
