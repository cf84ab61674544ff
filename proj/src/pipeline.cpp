#include "fifa/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "fifa/canonical.hpp"
#include "fifa/diversity.hpp"
#include "fifa/errors.hpp"
#include "fifa/hash.hpp"
#include "fifa/io.hpp"
#include "fifa/margin.hpp"
#include "fifa/selection.hpp"
#include "fifa/validate.hpp"

namespace fifa {

using nlohmann::ordered_json;

SummaryStats summarize_values(std::span<const double> values, std::uint64_t bins) {
    SummaryStats stats;
    stats.count = values.size();
    if (values.empty()) return stats;
    double lo = values[0];
    double hi = values[0];
    double sum = 0.0;
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        sum += v;
    }
    stats.min = lo;
    stats.max = hi;
    stats.mean = sum / static_cast<double>(values.size());
    if (bins == 0) return stats;
    Histogram& h = stats.histogram;
    if (hi == lo) {  // degenerate range: one bin holding everything
        h.edges = {lo, hi};
        h.counts = {values.size()};
        return stats;
    }
    h.edges.resize(bins + 1);
    h.counts.assign(bins, 0);
    double width = (hi - lo) / static_cast<double>(bins);
    for (std::uint64_t b = 0; b <= bins; ++b)
        h.edges[b] = lo + width * static_cast<double>(b);
    h.edges[bins] = hi;
    for (double v : values) {
        auto b = static_cast<std::size_t>((v - lo) / width);
        if (b >= bins) b = bins - 1;  // right-inclusive last bin
        ++h.counts[b];
    }
    return stats;
}

namespace {

struct PromptInfo {
    std::vector<std::uint64_t> ids;       // unique prompt ids, first-seen order
    std::vector<std::string> texts;       // aligned with ids
};

PromptInfo unique_prompts(std::span<const PreferencePair> pairs) {
    PromptInfo info;
    std::unordered_set<std::uint64_t> seen;
    for (const PreferencePair& p : pairs) {
        if (seen.insert(p.prompt_id).second) {
            info.ids.push_back(p.prompt_id);
            info.texts.push_back(p.prompt_text);
        }
    }
    return info;
}

void require_clean(const ValidationReport& report, bool rewards_required) {
    std::string problems;
    auto blame = [&](std::uint64_t count, const char* what) {
        if (count == 0) return;
        if (!problems.empty()) problems += "; ";
        problems += std::to_string(count) + " " + what;
    };
    blame(report.duplicate_ids, "duplicate pair ids");
    blame(report.partial_rewards, "pairs with only one reward");
    blame(report.empty_prompts, "empty prompts");
    blame(report.equal_refs, "pairs with winner == loser");
    if (rewards_required) blame(report.missing_rewards, "pairs without rewards");
    if (!problems.empty()) throw SchemaError(0, "dataset validation failed: " + problems);
}

DiversityMetrics subset_diversity(const io::PairDataset& dataset,
                                  std::span<const std::uint64_t> selected_ids,
                                  const EmbeddingTable& embeddings, const FilterConfig& filter,
                                  unsigned threads) {
    std::unordered_map<std::uint64_t, const PreferencePair*> by_id;
    for (const PreferencePair& p : dataset.pairs) by_id.emplace(p.pair_id, &p);
    std::vector<PreferencePair> subset;
    subset.reserve(selected_ids.size());
    for (std::uint64_t id : selected_ids) subset.push_back(*by_id.at(id));
    PromptInfo prompts = unique_prompts(subset);
    EmbeddingTable sub_table = embeddings.subset(prompts.ids);
    return corpus_diversity_metrics(prompts.texts, sub_table, filter.knn_k,
                                    filter.distance_floor, threads);
}

ordered_json histogram_to_json(const Histogram& h) {
    ordered_json j;
    j["edges"] = h.edges;
    j["counts"] = h.counts;
    return j;
}

ordered_json optional_to_json(const std::optional<double>& v) {
    if (!v) return nullptr;
    return *v;
}

}  // namespace

SelectOutcome run_select(const RunConfig& config) {
    const FilterConfig& filter = config.filter;
    if (filter.k_select < 1) throw ConfigError("k must be at least 1");
    if (filter.prompt_cap < 1) throw ConfigError("cap must be at least 1");
    if (filter.knn_k < 1) throw ConfigError("knn_k must be at least 1");
    if (config.paths.pairs.empty()) throw ConfigError("no pairs file configured");

    SelectOutcome outcome;
    outcome.dry_run = config.dry_run;

    io::PairDataset dataset = io::read_pairs(config.paths.pairs);
    if (dataset.pairs.empty()) throw EmptyInputError("pair file holds no pairs");
    require_clean(validate_pairs(dataset.pairs), /*rewards_required=*/true);

    PromptInfo prompts = unique_prompts(dataset.pairs);

    // Diversity inputs are resolved before any scoring so a bad run fails
    // before spending network requests.
    EmbeddingTable embeddings;
    if (filter.gamma != 0.0) {
        if (config.paths.embeddings.empty())
            throw ConfigError("gamma != 0 requires an embeddings file");
        embeddings = io::read_embeddings(config.paths.embeddings);
        std::vector<std::uint64_t> missing;
        for (std::uint64_t pid : prompts.ids)
            if (embeddings.find(pid) == EmbeddingTable::npos) missing.push_back(pid);
        if (!missing.empty())
            throw SchemaError(0, "embeddings missing for " + std::to_string(missing.size()) +
                                     " prompts (first: " + std::to_string(missing.front()) + ")");
    }

    QualityCache cache = config.paths.cache.empty() ? QualityCache()
                                                    : QualityCache(config.paths.cache);

    if (config.dry_run) {
        std::uint64_t hits = 0;
        std::uint64_t misses = 0;
        if (filter.alpha != 0.0) {
            std::unordered_set<std::uint64_t> counted;
            for (std::size_t i = 0; i < prompts.ids.size(); ++i) {
                if (!counted.insert(prompts.ids[i]).second) continue;
                if (cache.lookup(prompts.ids[i], config.llm.model_tag))
                    ++hits;
                else
                    ++misses;
            }
        }
        outcome.cache_hits = hits;
        outcome.planned_requests = misses;
        outcome.manifest.config = filter;
        outcome.manifest.config_hash = config_hash(filter);
        outcome.manifest.input_count = dataset.pairs.size();
        return outcome;
    }

    // Margins.
    std::unordered_map<std::uint64_t, double> margins;
    std::vector<double> margin_values;
    margins.reserve(dataset.pairs.size());
    margin_values.reserve(dataset.pairs.size());
    for (const PreferencePair& p : dataset.pairs) {
        double m = reward_margin(*p.reward_w, *p.reward_l);
        margins.emplace(p.pair_id, m);
        margin_values.push_back(m);
    }

    // Quality scores (skipped entirely when alpha == 0).
    std::unordered_map<std::uint64_t, int> llm_scores;
    if (filter.alpha != 0.0) {
        std::vector<std::pair<std::uint64_t, std::string>> to_score;
        to_score.reserve(prompts.ids.size());
        for (std::size_t i = 0; i < prompts.ids.size(); ++i)
            to_score.emplace_back(prompts.ids[i], prompts.texts[i]);
        QualityResult scored = score_prompts(to_score, config.llm, cache);
        llm_scores = std::move(scored.scores);
        outcome.cache_hits = scored.cache_hits;
        outcome.requests_made = scored.requests_made;
    }

    // Diversity terms over the dataset's unique prompts.
    std::unordered_map<std::uint64_t, double> diversity;
    if (filter.gamma != 0.0) {
        EmbeddingTable corpus = embeddings.subset(prompts.ids);
        DiversityScores scores =
            knn_log_distances(corpus, filter.knn_k, filter.distance_floor, config.threads);
        diversity = std::move(scores.per_prompt);
    }

    ImportanceResult importance =
        importance_scores(dataset.pairs, margins, llm_scores, diversity, filter.alpha,
                          filter.gamma);
    SelectionResult selection =
        select_top_k(importance.scored, filter.k_select, filter.prompt_cap);
    selection.excluded_unscored = importance.excluded_unscored.size();

    // Manifest.
    SelectionManifest& m = outcome.manifest;
    m.config = filter;
    m.config_hash = config_hash(filter);
    m.input_count = dataset.pairs.size();
    m.selected_count = selection.selected.size();
    m.excluded_unscored = selection.excluded_unscored;
    m.cap_in_effect = selection.cap_in_effect;
    m.cap_doublings = selection.cap_doublings;
    m.shortfall = selection.shortfall;
    for (const ScoredPair& sp : importance.scored)
        if (sp.reward_disagrees_label) ++m.n_reward_disagreements;

    m.margin_stats = summarize_values(margin_values, config.histogram_bins);
    m.margin_stats.histogram = margin_histogram(margin_values, config.histogram_bins);

    if (filter.alpha != 0.0) {
        std::vector<double> llm_values;
        llm_values.reserve(prompts.ids.size());
        for (std::uint64_t pid : prompts.ids) {
            auto it = llm_scores.find(pid);
            if (it != llm_scores.end()) llm_values.push_back(static_cast<double>(it->second));
        }
        m.llm_score_stats = summarize_values(llm_values, 11);
    }
    if (filter.gamma != 0.0) {
        std::vector<double> div_values;
        div_values.reserve(prompts.ids.size());
        for (std::uint64_t pid : prompts.ids) div_values.push_back(diversity.at(pid));
        m.diversity_stats = summarize_values(div_values, config.histogram_bins);
    }
    std::vector<double> importance_values;
    importance_values.reserve(importance.scored.size());
    for (const ScoredPair& sp : importance.scored) importance_values.push_back(sp.importance);
    m.importance_stats = summarize_values(importance_values, config.histogram_bins);

    if (filter.gamma != 0.0)
        m.selected_diversity = subset_diversity(dataset, selection.selected, embeddings, filter,
                                                config.threads);

    // Subset file in selection order, with unknown keys carried through.
    std::unordered_map<std::uint64_t, std::size_t> index_of;
    for (std::size_t i = 0; i < dataset.pairs.size(); ++i)
        index_of.emplace(dataset.pairs[i].pair_id, i);
    io::PairDataset subset;
    subset.pairs.reserve(selection.selected.size());
    subset.extras.reserve(selection.selected.size());
    for (std::uint64_t id : selection.selected) {
        std::size_t i = index_of.at(id);
        subset.pairs.push_back(dataset.pairs[i]);
        subset.extras.push_back(dataset.extras[i]);
    }

    std::filesystem::path out_dir =
        config.paths.output_dir.empty() ? std::filesystem::path(".") : config.paths.output_dir;
    std::filesystem::create_directories(out_dir);
    outcome.subset_path = out_dir / "subset.jsonl";
    outcome.manifest_path = io::manifest_path_for(outcome.subset_path);
    io::write_subset(outcome.subset_path, subset, m);
    return outcome;
}

nlohmann::ordered_json run_stats(const StatsConfig& config) {
    if (config.pairs.empty()) throw ConfigError("no pairs file configured");
    io::PairDataset dataset = io::read_pairs(config.pairs);
    PromptInfo prompts = unique_prompts(dataset.pairs);

    ordered_json report;
    std::vector<std::string> warnings;
    report["input_count"] = dataset.pairs.size();
    report["unique_prompts"] = prompts.ids.size();

    std::vector<double> margin_values;
    for (const PreferencePair& p : dataset.pairs)
        if (p.reward_w && p.reward_l) margin_values.push_back(reward_margin(*p.reward_w, *p.reward_l));
    if (margin_values.empty()) {
        report["margin_histogram"] = nullptr;
        warnings.push_back("no pairs carry rewards; margin histogram skipped");
    } else {
        report["margin_histogram"] =
            histogram_to_json(margin_histogram(margin_values, config.histogram_bins));
    }

    DiversityMetrics metrics;
    try {
        metrics.word_entropy_bits = word_entropy(prompts.texts);
    } catch (const EmptyCorpusError&) {
        warnings.push_back("no tokens in any prompt; word entropy skipped");
    }
    if (config.embeddings.empty()) {
        warnings.push_back("no embeddings file; semantic/singular/knn metrics skipped");
    } else {
        EmbeddingTable table = io::read_embeddings(config.embeddings).subset(prompts.ids);
        if (table.size() < prompts.ids.size())
            warnings.push_back("embeddings missing for " +
                               std::to_string(prompts.ids.size() - table.size()) + " prompts");
        DiversityMetrics computed = corpus_diversity_metrics(
            prompts.texts, table, config.knn_k, config.distance_floor, config.threads);
        metrics.semantic_diversity = computed.semantic_diversity;
        metrics.singular_entropy_bits = computed.singular_entropy_bits;
        metrics.knn_entropy_nat = computed.knn_entropy_nat;
        if (!computed.knn_entropy_nat)
            warnings.push_back("fewer than knn_k + 1 embedded prompts; knn entropy skipped");
    }
    report["word_entropy_bits"] = optional_to_json(metrics.word_entropy_bits);
    report["semantic_diversity"] = optional_to_json(metrics.semantic_diversity);
    report["singular_entropy_bits"] = optional_to_json(metrics.singular_entropy_bits);
    report["knn_entropy_nat"] = optional_to_json(metrics.knn_entropy_nat);

    if (config.cache.empty()) {
        report["llm_score_histogram"] = nullptr;
        warnings.push_back("no score cache; llm score histogram skipped");
    } else {
        QualityCache cache(config.cache);
        std::vector<std::uint64_t> counts(11, 0);
        std::uint64_t scored = 0;
        for (std::uint64_t pid : prompts.ids) {
            if (auto hit = cache.lookup(pid, config.model_tag)) {
                ++counts[static_cast<std::size_t>(hit->score)];
                ++scored;
            }
        }
        if (scored == 0) {
            report["llm_score_histogram"] = nullptr;
            warnings.push_back("cache holds no scores for these prompts");
        } else {
            Histogram h;
            h.counts = counts;
            h.edges.resize(12);
            for (std::size_t b = 0; b < 12; ++b) h.edges[b] = static_cast<double>(b);
            ordered_json j = histogram_to_json(h);
            j["scored_prompts"] = scored;
            report["llm_score_histogram"] = j;
        }
    }
    report["warnings"] = warnings;
    return report;
}

namespace {

bool parse_bool(const std::string& value, const std::string& key) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("config key '" + key + "' expects a boolean, got '" + value + "'");
}

double parse_real(const std::string& value, const std::string& key) {
    try {
        std::size_t used = 0;
        double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' expects a number, got '" + value + "'");
    }
}

std::uint64_t parse_uint(const std::string& value, const std::string& key) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || ptr != value.data() + value.size())
        throw ConfigError("config key '" + key + "' expects a non-negative integer, got '" +
                          value + "'");
    return v;
}

}  // namespace

RunConfig load_run_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in.is_open()) throw IOError("cannot open config file " + file.string());
    std::filesystem::path base = file.parent_path();
    auto resolve = [&](const std::string& value) {
        std::filesystem::path p(value);
        return p.is_absolute() ? p : base / p;
    };

    RunConfig config;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string text(trim(line));
        if (text.empty() || text[0] == '#') continue;
        std::size_t eq = text.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + " is not key = value");
        std::string key(trim(text.substr(0, eq)));
        std::string value(trim(text.substr(eq + 1)));
        if (value.size() >= 2 && ((value.front() == '"' && value.back() == '"') ||
                                  (value.front() == '\'' && value.back() == '\'')))
            value = value.substr(1, value.size() - 2);

        if (key == "alpha") config.filter.alpha = parse_real(value, key);
        else if (key == "gamma") config.filter.gamma = parse_real(value, key);
        else if (key == "k") config.filter.k_select = parse_uint(value, key);
        else if (key == "knn_k") config.filter.knn_k = parse_uint(value, key);
        else if (key == "cap") config.filter.prompt_cap = parse_uint(value, key);
        else if (key == "seed") config.filter.seed = parse_uint(value, key);
        else if (key == "distance_floor") config.filter.distance_floor = parse_real(value, key);
        else if (key == "threads") config.threads = static_cast<unsigned>(parse_uint(value, key));
        else if (key == "pairs") config.paths.pairs = resolve(value);
        else if (key == "embeddings") config.paths.embeddings = resolve(value);
        else if (key == "cache") config.paths.cache = resolve(value);
        else if (key == "output_dir") config.paths.output_dir = resolve(value);
        else if (key == "endpoint_url") config.llm.url = value;
        else if (key == "model_tag") config.llm.model_tag = value;
        else if (key == "api_key_env") config.llm.api_key_env = value;
        else if (key == "retries") config.llm.retries = static_cast<int>(parse_uint(value, key));
        else if (key == "max_in_flight")
            config.llm.max_in_flight = static_cast<int>(parse_uint(value, key));
        else if (key == "requests_per_second")
            config.llm.requests_per_second = parse_real(value, key);
        else if (key == "timeout_seconds")
            config.llm.timeout_seconds = static_cast<int>(parse_uint(value, key));
        else if (key == "offline") config.llm.offline = parse_bool(value, key);
        else if (key == "histogram_bins") config.histogram_bins = parse_uint(value, key);
        else
            throw ConfigError("unknown config key '" + key + "' at line " +
                              std::to_string(lineno));
    }
    return config;
}

}  // namespace fifa
