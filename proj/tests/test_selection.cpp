#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <vector>

#include "fifa/hash.hpp"
#include "fifa/selection.hpp"
#include "oracles.hpp"

namespace {

fifa::ScoredPair sp(std::uint64_t pair_id, std::uint64_t prompt_id, double importance) {
    fifa::ScoredPair p;
    p.pair_id = pair_id;
    p.prompt_id = prompt_id;
    p.importance = importance;
    return p;
}

fifa::PreferencePair pp(std::uint64_t id, const std::string& prompt, double rw, double rl) {
    fifa::PreferencePair p;
    p.pair_id = id;
    p.prompt_text = prompt;
    p.prompt_id = fifa::prompt_id_of(prompt);
    p.winner_ref = "w" + std::to_string(id);
    p.loser_ref = "l" + std::to_string(id);
    p.reward_w = rw;
    p.reward_l = rl;
    return p;
}

}  // namespace

TEST_CASE("importance adds the weighted components exactly") {
    std::vector<fifa::PreferencePair> pairs = {pp(0, "p", 21.0, 20.2)};
    std::unordered_map<std::uint64_t, double> margins = {{0, 0.8}};
    std::unordered_map<std::uint64_t, int> llm = {{pairs[0].prompt_id, 8}};
    std::unordered_map<std::uint64_t, double> div = {{pairs[0].prompt_id, 0.5}};

    fifa::ImportanceResult r = fifa::importance_scores(pairs, margins, llm, div, 0.5, 0.5);
    REQUIRE(r.scored.size() == 1);
    CHECK(std::abs(r.scored[0].importance - 5.05) <= 1e-12);  // 0.8 + 0.5*8 + 0.5*0.5
    CHECK(r.scored[0].margin == 0.8);
    CHECK(r.scored[0].llm_score == 8.0);
    CHECK(r.scored[0].diversity_term == 0.5);
    CHECK_FALSE(r.scored[0].reward_disagrees_label);
    CHECK(r.excluded_unscored.empty());
}

TEST_CASE("alpha = gamma = 0 reduces importance to the margin") {
    std::vector<fifa::PreferencePair> pairs = {pp(0, "a", 3, 1), pp(1, "b", 9, 2)};
    std::unordered_map<std::uint64_t, double> margins = {{0, 2.0}, {1, 7.0}};
    fifa::ImportanceResult r = fifa::importance_scores(pairs, margins, {}, {}, 0.0, 0.0);
    REQUIRE(r.scored.size() == 2);
    CHECK(r.scored[0].importance == 2.0);
    CHECK(r.scored[1].importance == 7.0);

    // all components zero -> importance zero
    std::unordered_map<std::uint64_t, double> zero_m = {{0, 0.0}, {1, 0.0}};
    std::unordered_map<std::uint64_t, int> zero_l = {{pairs[0].prompt_id, 0},
                                                     {pairs[1].prompt_id, 0}};
    std::unordered_map<std::uint64_t, double> zero_d = {{pairs[0].prompt_id, 0.0},
                                                        {pairs[1].prompt_id, 0.0}};
    fifa::ImportanceResult z = fifa::importance_scores(pairs, zero_m, zero_l, zero_d, 0.5, 0.5);
    CHECK(z.scored[0].importance == 0.0);
    CHECK(z.scored[1].importance == 0.0);
}

TEST_CASE("pairs without an llm score are excluded when alpha > 0") {
    std::vector<fifa::PreferencePair> pairs = {pp(0, "scored", 2, 1), pp(1, "missing", 5, 1)};
    std::unordered_map<std::uint64_t, double> margins = {{0, 1.0}, {1, 4.0}};
    std::unordered_map<std::uint64_t, int> llm = {{pairs[0].prompt_id, 6}};
    std::unordered_map<std::uint64_t, double> div = {{pairs[0].prompt_id, 0.1},
                                                     {pairs[1].prompt_id, 0.2}};
    fifa::ImportanceResult r = fifa::importance_scores(pairs, margins, llm, div, 0.5, 0.5);
    REQUIRE(r.scored.size() == 1);
    CHECK(r.scored[0].pair_id == 0);
    CHECK(r.excluded_unscored == std::vector<std::uint64_t>{1});

    // with alpha = 0 the same pair sails through with a zero llm term
    fifa::ImportanceResult r0 = fifa::importance_scores(pairs, margins, llm, div, 0.0, 0.5);
    CHECK(r0.scored.size() == 2);
    CHECK(r0.excluded_unscored.empty());
}

TEST_CASE("missing required components throw MissingScoreError") {
    std::vector<fifa::PreferencePair> pairs = {pp(0, "p", 2, 1)};
    std::unordered_map<std::uint64_t, double> margins;  // empty: margin always required
    CHECK_THROWS_AS(fifa::importance_scores(pairs, margins, {}, {}, 0.0, 0.0),
                    fifa::MissingScoreError);

    std::unordered_map<std::uint64_t, double> have_margin = {{0, 1.0}};
    CHECK_THROWS_AS(fifa::importance_scores(pairs, have_margin, {}, {}, 0.0, 0.5),
                    fifa::MissingScoreError);  // diversity required when gamma != 0
    CHECK_NOTHROW(fifa::importance_scores(pairs, have_margin, {}, {}, 0.0, 0.0));
}

TEST_CASE("proxy-reward disagreement is flagged, labels kept") {
    std::vector<fifa::PreferencePair> pairs = {pp(0, "p", 1.0, 3.0)};  // reward_w < reward_l
    std::unordered_map<std::uint64_t, double> margins = {{0, 2.0}};
    fifa::ImportanceResult r = fifa::importance_scores(pairs, margins, {}, {}, 0.0, 0.0);
    REQUIRE(r.scored.size() == 1);
    CHECK(r.scored[0].reward_disagrees_label);
    CHECK(r.scored[0].pair_id == 0);  // same pair, same orientation
}

TEST_CASE("select_top_k keeps the plain top-K when prompts are distinct") {
    std::vector<fifa::ScoredPair> scored = {sp(0, 100, 5.0), sp(1, 101, 3.0), sp(2, 102, 1.0)};
    fifa::SelectionResult r = fifa::select_top_k(scored, 2, 5);
    CHECK(r.selected == std::vector<std::uint64_t>{0, 1});
    CHECK(r.cap_in_effect == 5);
    CHECK(r.cap_doublings == 0);
    CHECK_FALSE(r.shortfall);
}

TEST_CASE("the per-prompt cap diverts selection to other prompts") {
    // one hot prompt with ten pairs (scores 10..1) plus one other-prompt pair
    std::vector<fifa::ScoredPair> scored;
    for (std::uint64_t i = 0; i < 10; ++i) scored.push_back(sp(i, 500, 10.0 - i));
    scored.push_back(sp(10, 501, 0.5));

    fifa::SelectionResult r = fifa::select_top_k(scored, 6, 5);
    CHECK(r.selected == std::vector<std::uint64_t>{0, 1, 2, 3, 4, 10});
    CHECK(r.cap_doublings == 0);
    CHECK(r.cap_in_effect == 5);
}

TEST_CASE("an unmeetable quota doubles the cap and rescans from scratch") {
    std::vector<fifa::ScoredPair> scored;
    for (std::uint64_t i = 0; i < 10; ++i) scored.push_back(sp(i, 500, 10.0 - i));
    scored.push_back(sp(10, 501, 0.5));

    // K=8 exceeds cap 5 + 1 other pair; the doubled cap (10) admits the
    // eight highest-importance pairs outright
    fifa::SelectionResult r = fifa::select_top_k(scored, 8, 5);
    CHECK(r.selected == std::vector<std::uint64_t>{0, 1, 2, 3, 4, 5, 6, 7});
    CHECK(r.cap_doublings == 1);
    CHECK(r.cap_in_effect == 10);
    CHECK_FALSE(r.shortfall);

    // brute force agrees that this is the capped argmax
    oracle::BruteSelection brute = oracle::brute_force_select(scored, 8, 5);
    CHECK(brute.selected == r.selected);
    CHECK(brute.cap_doublings == 1);
}

TEST_CASE("ties break by ascending pair_id") {
    std::vector<fifa::ScoredPair> scored = {sp(9, 1, 2.0), sp(4, 2, 2.0), sp(7, 3, 2.0)};
    fifa::SelectionResult r = fifa::select_top_k(scored, 2, 5);
    CHECK(r.selected == std::vector<std::uint64_t>{4, 7});
}

TEST_CASE("selection is invariant to input order and constant importance shifts") {
    std::mt19937_64 rng(5);
    std::vector<fifa::ScoredPair> scored;
    for (std::uint64_t i = 0; i < 18; ++i)
        scored.push_back(sp(i, 900 + i % 4, static_cast<double>(rng() % 17) / 2.0));

    fifa::SelectionResult base = fifa::select_top_k(scored, 6, 2);

    std::vector<fifa::ScoredPair> shuffled = scored;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(fifa::select_top_k(shuffled, 6, 2).selected == base.selected);

    std::vector<fifa::ScoredPair> shifted = scored;
    for (fifa::ScoredPair& s : shifted) s.importance += 16.0;  // exactly representable
    CHECK(fifa::select_top_k(shifted, 6, 2).selected == base.selected);
}

TEST_CASE("K beyond the dataset returns everything admissible with a shortfall flag") {
    std::vector<fifa::ScoredPair> scored = {sp(0, 1, 3.0), sp(1, 1, 2.0), sp(2, 2, 1.0)};
    fifa::SelectionResult r = fifa::select_top_k(scored, 9, 1);
    CHECK(r.selected == std::vector<std::uint64_t>{0, 1, 2});
    CHECK(r.shortfall);
    CHECK(r.cap_in_effect >= 2);  // doubled until everything was admissible
}

TEST_CASE("select_top_k matches the brute-force capped argmax on random instances") {
    std::mt19937_64 rng(41);
    for (int inst = 0; inst < 40; ++inst) {
        std::size_t n = 1 + rng() % 16;
        std::vector<fifa::ScoredPair> scored;
        for (std::size_t i = 0; i < n; ++i)
            scored.push_back(sp(i, 70 + rng() % 4, static_cast<double>(rng() % 13) / 2.0));
        std::uint64_t k = 1 + rng() % 6;
        std::uint64_t cap = 1 + rng() % 3;

        fifa::SelectionResult got = fifa::select_top_k(scored, k, cap);
        oracle::BruteSelection want = oracle::brute_force_select(scored, k, cap);
        CAPTURE(inst);
        CHECK(got.selected == want.selected);
        CHECK(got.cap_in_effect == want.cap_in_effect);
        CHECK(got.cap_doublings == want.cap_doublings);
        CHECK(got.shortfall == want.shortfall);

        // invariant: no prompt exceeds the effective cap
        std::map<std::uint64_t, std::uint64_t> counts;
        for (std::uint64_t id : got.selected) {
            auto it = std::find_if(scored.begin(), scored.end(),
                                   [id](const fifa::ScoredPair& s) { return s.pair_id == id; });
            REQUIRE(it != scored.end());
            ++counts[it->prompt_id];
        }
        for (const auto& [prompt, c] : counts) CHECK(c <= got.cap_in_effect);
        CHECK(got.selected.size() <= k);
    }
}

TEST_CASE("kcenter_greedy spreads across the farthest points") {
    fifa::EmbeddingTable t = oracle::make_table({{0.0f}, {1.0f}, {10.0f}});
    CHECK(fifa::kcenter_greedy(t, 2) == std::vector<std::uint64_t>{0, 2});

    // K = N returns every point
    CHECK(fifa::kcenter_greedy(t, 3).size() == 3);

    // equidistant candidates resolve to the smaller id
    fifa::EmbeddingTable sym = oracle::make_table({{0.0f}, {-1.0f}, {1.0f}});
    CHECK(fifa::kcenter_greedy(sym, 2) == std::vector<std::uint64_t>{0, 1});

    CHECK_THROWS_AS(fifa::kcenter_greedy(t, 4), fifa::TooFewPointsError);
}

TEST_CASE("baseline selectors follow their stated rules") {
    std::vector<fifa::PreferencePair> pairs = {pp(0, "a", 3, 0), pp(1, "b", 9, 0),
                                               pp(2, "c", 1, 0)};

    fifa::SelectionResult hr =
        fifa::select_baseline(pairs, fifa::BaselineMethod::kHighReward, 1, 0);
    CHECK(hr.selected == std::vector<std::uint64_t>{1});

    std::vector<fifa::PreferencePair> with_loss = pairs;
    with_loss[0].precomputed_loss = 0.1;
    with_loss[1].precomputed_loss = 0.9;
    with_loss.pop_back();
    fifa::SelectionResult loss =
        fifa::select_baseline(with_loss, fifa::BaselineMethod::kLoss, 1, 0);
    CHECK(loss.selected == std::vector<std::uint64_t>{1});

    // random: same seed -> same pick; deterministic across runs
    fifa::SelectionResult r1 = fifa::select_baseline(pairs, fifa::BaselineMethod::kRandom, 2, 7);
    fifa::SelectionResult r2 = fifa::select_baseline(pairs, fifa::BaselineMethod::kRandom, 2, 7);
    CHECK(r1.selected == r2.selected);
    CHECK(r1.selected.size() == 2);

    // missing method inputs
    std::vector<fifa::PreferencePair> no_rewards = {pp(0, "a", 0, 0)};
    no_rewards[0].reward_w.reset();
    no_rewards[0].reward_l.reset();
    CHECK_THROWS_AS(fifa::select_baseline(no_rewards, fifa::BaselineMethod::kHighReward, 1, 0),
                    fifa::MissingInputError);
    CHECK_THROWS_AS(fifa::select_baseline(pairs, fifa::BaselineMethod::kLoss, 1, 0),
                    fifa::MissingInputError);
    CHECK_THROWS_AS(fifa::select_baseline(pairs, fifa::BaselineMethod::kCoreset, 1, 0),
                    fifa::MissingInputError);
}

TEST_CASE("random baseline differs across seeds on a large instance") {
    std::vector<fifa::PreferencePair> pairs;
    for (std::uint64_t i = 0; i < 100; ++i)
        pairs.push_back(pp(i, "p" + std::to_string(i), 1, 0));
    fifa::SelectionResult a = fifa::select_baseline(pairs, fifa::BaselineMethod::kRandom, 10, 1);
    fifa::SelectionResult b = fifa::select_baseline(pairs, fifa::BaselineMethod::kRandom, 10, 2);
    CHECK(a.selected != b.selected);
}

TEST_CASE("coreset picks one representative pair per spread-out prompt") {
    // two prompts far apart, one in between; two pairs per prompt. Prompt
    // ids are pinned so the k-center seed (smallest id) is the left prompt.
    std::vector<fifa::PreferencePair> pairs = {pp(0, "left", 5, 0),  pp(1, "left", 8, 0),
                                               pp(2, "mid", 4, 0),   pp(3, "mid", 2, 0),
                                               pp(4, "right", 1, 0), pp(5, "right", 3, 0)};
    pairs[0].prompt_id = pairs[1].prompt_id = 100;
    pairs[2].prompt_id = pairs[3].prompt_id = 200;
    pairs[4].prompt_id = pairs[5].prompt_id = 300;
    fifa::EmbeddingTable emb(1);
    emb.add(100, std::vector<float>{0.0f});
    emb.add(200, std::vector<float>{5.0f});
    emb.add(300, std::vector<float>{10.0f});

    fifa::SelectionResult cs =
        fifa::select_baseline(pairs, fifa::BaselineMethod::kCoreset, 2, 0, &emb);
    REQUIRE(cs.selected.size() == 2);
    // k-center picks the two extremes; the representative is the
    // highest-reward pair within each prompt
    CHECK(std::find(cs.selected.begin(), cs.selected.end(), 1) != cs.selected.end());
    CHECK(std::find(cs.selected.begin(), cs.selected.end(), 5) != cs.selected.end());
}
