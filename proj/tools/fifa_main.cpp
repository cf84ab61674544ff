#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "fifa/canonical.hpp"
#include "fifa/design.hpp"
#include "fifa/diversity.hpp"
#include "fifa/errors.hpp"
#include "fifa/io.hpp"
#include "fifa/margin.hpp"
#include "fifa/pipeline.hpp"
#include "fifa/quality.hpp"
#include "fifa/selection.hpp"
#include "fifa/validate.hpp"

namespace {

using nlohmann::ordered_json;

// Data goes to stdout or files; everything human-facing goes here.
void log_line(const std::string& msg) { std::cerr << msg << "\n"; }

void emit(const std::string& output, const std::string& content) {
    if (output.empty() || output == "-") {
        std::cout << content;
        std::cout.flush();
    } else {
        fifa::io::atomic_write(output, content);
    }
}

// Values only applied over the config file when the user passed the flag.
struct SelectOptions {
    std::string config_file;
    std::string pairs, embeddings, cache, output_dir;
    double alpha = 0.5, gamma = 0.5, distance_floor = 1e-12;
    std::uint64_t k = 5000, knn_k = 1, cap = 5, seed = 0, histogram_bins = 20;
    unsigned threads = 0;
    std::string endpoint_url, model_tag, api_key_env;
    int retries = 3;
    bool offline = false;
    bool dry_run = false;
};

void add_select_flags(CLI::App* cmd, SelectOptions& opt) {
    cmd->add_option("--config", opt.config_file, "run config file (key = value lines)");
    cmd->add_option("--pairs", opt.pairs, "pair JSONL file");
    cmd->add_option("--embeddings", opt.embeddings, "binary prompt-embedding file");
    cmd->add_option("--cache", opt.cache, "llm score cache (JSONL)");
    cmd->add_option("--output-dir", opt.output_dir, "directory for subset + manifest");
    cmd->add_option("--alpha", opt.alpha, "llm-score weight");
    cmd->add_option("--gamma", opt.gamma, "diversity weight");
    cmd->add_option("--k", opt.k, "subset size");
    cmd->add_option("--knn-k", opt.knn_k, "k for the k-NN diversity term");
    cmd->add_option("--cap", opt.cap, "per-prompt pair cap");
    cmd->add_option("--seed", opt.seed, "seed (random baseline only)");
    cmd->add_option("--threads", opt.threads, "worker threads (0 = logical cores)");
    cmd->add_option("--distance-floor", opt.distance_floor, "min distance before the log");
    cmd->add_option("--histogram-bins", opt.histogram_bins, "manifest histogram bins");
    cmd->add_option("--endpoint-url", opt.endpoint_url, "chat-completion endpoint");
    cmd->add_option("--model-tag", opt.model_tag, "judge model tag");
    cmd->add_option("--api-key-env", opt.api_key_env, "env var holding the API key");
    cmd->add_option("--retries", opt.retries, "attempts per prompt");
    cmd->add_flag("--offline", opt.offline, "never touch the network");
    cmd->add_flag("--dry-run", opt.dry_run, "validate and plan without writing");
}

fifa::RunConfig resolve_run_config(const CLI::App* cmd, const SelectOptions& opt) {
    fifa::RunConfig config;
    if (!opt.config_file.empty()) config = fifa::load_run_config(opt.config_file);
    auto passed = [&](const char* flag) { return cmd->count(flag) > 0; };
    if (passed("--pairs")) config.paths.pairs = opt.pairs;
    if (passed("--embeddings")) config.paths.embeddings = opt.embeddings;
    if (passed("--cache")) config.paths.cache = opt.cache;
    if (passed("--output-dir")) config.paths.output_dir = opt.output_dir;
    if (passed("--alpha")) config.filter.alpha = opt.alpha;
    if (passed("--gamma")) config.filter.gamma = opt.gamma;
    if (passed("--k")) config.filter.k_select = opt.k;
    if (passed("--knn-k")) config.filter.knn_k = opt.knn_k;
    if (passed("--cap")) config.filter.prompt_cap = opt.cap;
    if (passed("--seed")) config.filter.seed = opt.seed;
    if (passed("--threads")) config.threads = opt.threads;
    if (passed("--distance-floor")) config.filter.distance_floor = opt.distance_floor;
    if (passed("--histogram-bins")) config.histogram_bins = opt.histogram_bins;
    if (passed("--endpoint-url")) config.llm.url = opt.endpoint_url;
    if (passed("--model-tag")) config.llm.model_tag = opt.model_tag;
    if (passed("--api-key-env")) config.llm.api_key_env = opt.api_key_env;
    if (passed("--retries")) config.llm.retries = opt.retries;
    if (passed("--offline")) config.llm.offline = true;
    if (passed("--dry-run")) config.dry_run = true;
    return config;
}

int cmd_select(const CLI::App* cmd, const SelectOptions& opt) {
    fifa::RunConfig config = resolve_run_config(cmd, opt);
    fifa::SelectOutcome outcome = fifa::run_select(config);
    if (outcome.dry_run) {
        log_line("dry run: " + std::to_string(outcome.manifest.input_count) + " pairs validated");
        log_line("dry run: " + std::to_string(outcome.cache_hits) + " cached scores, " +
                 std::to_string(outcome.planned_requests) + " endpoint requests would be needed");
        return 0;
    }
    log_line("selected " + std::to_string(outcome.manifest.selected_count) + " of " +
             std::to_string(outcome.manifest.input_count) + " pairs (cap " +
             std::to_string(outcome.manifest.cap_in_effect) + ", " +
             std::to_string(outcome.manifest.excluded_unscored) + " unscored excluded)");
    if (outcome.manifest.shortfall)
        log_line("warning: fewer admissible pairs than requested; shortfall recorded");
    log_line("wrote " + outcome.subset_path.string());
    log_line("wrote " + outcome.manifest_path.string());
    return 0;
}

int cmd_score_margin(const std::string& pairs_path, const std::string& output) {
    fifa::io::PairDataset dataset = fifa::io::read_pairs(pairs_path);
    std::string out;
    for (const fifa::PreferencePair& p : dataset.pairs) {
        if (!p.reward_w || !p.reward_l)
            throw fifa::SchemaError(0, "pair " + std::to_string(p.pair_id) + " lacks rewards");
        ordered_json j;
        j["pair_id"] = p.pair_id;
        j["margin"] = fifa::reward_margin(*p.reward_w, *p.reward_l);
        out += j.dump();
        out += '\n';
    }
    emit(output, out);
    log_line("scored " + std::to_string(dataset.pairs.size()) + " pair margins");
    return 0;
}

int cmd_score_quality(const CLI::App* cmd, const SelectOptions& opt, const std::string& output) {
    fifa::RunConfig config = resolve_run_config(cmd, opt);
    fifa::io::PairDataset dataset = fifa::io::read_pairs(config.paths.pairs);
    std::vector<std::pair<std::uint64_t, std::string>> prompts;
    std::vector<std::uint64_t> order;
    {
        std::unordered_map<std::uint64_t, bool> seen;
        for (const fifa::PreferencePair& p : dataset.pairs)
            if (seen.emplace(p.prompt_id, true).second) {
                prompts.emplace_back(p.prompt_id, p.prompt_text);
                order.push_back(p.prompt_id);
            }
    }
    fifa::QualityCache cache = config.paths.cache.empty()
                                   ? fifa::QualityCache()
                                   : fifa::QualityCache(config.paths.cache);
    fifa::QualityResult result = fifa::score_prompts(prompts, config.llm, cache);
    std::string out;
    for (std::uint64_t pid : order) {
        auto it = result.scores.find(pid);
        if (it == result.scores.end()) continue;
        ordered_json j;
        j["prompt_id"] = pid;
        j["llm_score"] = it->second;
        out += j.dump();
        out += '\n';
    }
    emit(output, out);
    log_line("scored " + std::to_string(result.scores.size()) + " prompts (" +
             std::to_string(result.cache_hits) + " cached, " +
             std::to_string(result.requests_made) + " requests, " +
             std::to_string(result.unscored.size()) + " unscored)");
    return 0;
}

int cmd_score_diversity(const CLI::App* cmd, const SelectOptions& opt,
                        const std::string& output) {
    fifa::RunConfig config = resolve_run_config(cmd, opt);
    fifa::io::PairDataset dataset = fifa::io::read_pairs(config.paths.pairs);
    std::vector<std::uint64_t> order;
    {
        std::unordered_map<std::uint64_t, bool> seen;
        for (const fifa::PreferencePair& p : dataset.pairs)
            if (seen.emplace(p.prompt_id, true).second) order.push_back(p.prompt_id);
    }
    if (config.paths.embeddings.empty())
        throw fifa::ConfigError("score-diversity requires --embeddings");
    fifa::EmbeddingTable table =
        fifa::io::read_embeddings(config.paths.embeddings).subset(order);
    if (table.size() < order.size())
        throw fifa::SchemaError(0, "embeddings missing for " +
                                       std::to_string(order.size() - table.size()) + " prompts");
    fifa::DiversityScores scores = fifa::knn_log_distances(
        table, config.filter.knn_k, config.filter.distance_floor, config.threads);
    std::string out;
    for (std::uint64_t pid : order) {
        ordered_json j;
        j["prompt_id"] = pid;
        j["log_knn_distance"] = scores.per_prompt.at(pid);
        out += j.dump();
        out += '\n';
    }
    emit(output, out);
    log_line("knn entropy estimate (nats): " + fifa::format_double(scores.entropy_estimate));
    return 0;
}

int cmd_baseline(const CLI::App* cmd, const SelectOptions& opt, const std::string& method,
                 const std::string& output) {
    fifa::RunConfig config = resolve_run_config(cmd, opt);
    fifa::io::PairDataset dataset = fifa::io::read_pairs(config.paths.pairs);

    fifa::BaselineMethod m;
    if (method == "random") m = fifa::BaselineMethod::kRandom;
    else if (method == "high-reward") m = fifa::BaselineMethod::kHighReward;
    else if (method == "loss") m = fifa::BaselineMethod::kLoss;
    else if (method == "coreset") m = fifa::BaselineMethod::kCoreset;
    else throw fifa::ConfigError("unknown baseline method '" + method + "'");

    fifa::EmbeddingTable table;
    if (m == fifa::BaselineMethod::kCoreset) {
        if (config.paths.embeddings.empty())
            throw fifa::MissingInputError("coreset baseline requires --embeddings");
        table = fifa::io::read_embeddings(config.paths.embeddings);
    }
    fifa::SelectionResult result = fifa::select_baseline(
        dataset.pairs, m, config.filter.k_select, config.filter.seed,
        table.empty() ? nullptr : &table);

    std::unordered_map<std::uint64_t, std::size_t> index_of;
    for (std::size_t i = 0; i < dataset.pairs.size(); ++i)
        index_of.emplace(dataset.pairs[i].pair_id, i);
    fifa::io::PairDataset subset;
    for (std::uint64_t id : result.selected) {
        std::size_t i = index_of.at(id);
        subset.pairs.push_back(dataset.pairs[i]);
        subset.extras.push_back(dataset.extras[i]);
    }
    fifa::io::write_pairs(output, subset);
    log_line("baseline '" + method + "' selected " + std::to_string(result.selected.size()) +
             " pairs" + (result.shortfall ? " (shortfall)" : ""));
    return 0;
}

int cmd_stats(const fifa::StatsConfig& config, const std::string& output) {
    ordered_json report = fifa::run_stats(config);
    emit(output, report.dump(2) + "\n");
    return 0;
}

int cmd_design_lab(std::size_t d, std::size_t m, std::uint64_t budget, std::uint64_t trials,
                   std::uint64_t seed, double delta, double noise, const std::string& output) {
    fifa::design::MarginReport report =
        fifa::design::run_margin_experiment(d, m, budget, trials, seed, delta, noise);
    emit(output, report.csv());
    for (const char* policy : {"uniform", "high_margin", "g_optimal"})
        log_line(std::string(policy) + ": mean max error " +
                 fifa::format_double(report.mean_max_error(policy)) + ", bound violation rate " +
                 fifa::format_double(report.violation_rate(policy)));

    // Small optimizer demo on the standard basis: optimum is uniform, g = d.
    std::vector<std::vector<double>> basis(d, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < d; ++i) basis[i][i] = 1.0;
    fifa::design::DesignResult demo = fifa::design::optimize_design(basis, 1000, 1e-9);
    log_line("standard-basis demo: g = " + fifa::format_double(demo.g) + " after " +
             std::to_string(demo.iterations) + " iterations (d = " + std::to_string(d) + ")");
    return 0;
}

int cmd_cache_ls(const std::string& cache_path) {
    fifa::QualityCache cache{std::filesystem::path(cache_path)};
    std::string out;
    for (const fifa::QualityCacheEntry& e : cache.entries_sorted()) {
        out += std::to_string(e.prompt_hash);
        out += '\t';
        out += e.model_tag;
        out += '\t';
        out += std::to_string(e.score);
        out += '\t';
        out += std::to_string(e.timestamp);
        out += '\n';
    }
    std::cout << out;
    log_line(std::to_string(cache.size()) + " cache entries");
    return 0;
}

int cmd_cache_merge(const std::vector<std::string>& inputs, const std::string& output) {
    std::vector<std::filesystem::path> paths(inputs.begin(), inputs.end());
    fifa::QualityCache::merge_files(paths, output);
    fifa::QualityCache merged{std::filesystem::path(output)};
    log_line("merged " + std::to_string(inputs.size()) + " caches into " + output + " (" +
             std::to_string(merged.size()) + " entries)");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fifa: automated filtering of preference pairs by margin, quality and "
                 "diversity, plus a linear-design simulation lab"};
    app.require_subcommand(1);

    SelectOptions select_opt;
    CLI::App* select = app.add_subcommand("select", "run the full filtering pipeline");
    add_select_flags(select, select_opt);

    std::string margin_pairs, margin_output = "-";
    CLI::App* score_margin = app.add_subcommand("score-margin", "emit per-pair reward margins");
    score_margin->add_option("--pairs", margin_pairs, "pair JSONL file")->required();
    score_margin->add_option("--output", margin_output, "output path or - for stdout");

    SelectOptions quality_opt;
    std::string quality_output = "-";
    CLI::App* score_quality =
        app.add_subcommand("score-quality", "emit per-prompt llm quality scores");
    add_select_flags(score_quality, quality_opt);
    score_quality->add_option("--output", quality_output, "output path or - for stdout");

    SelectOptions diversity_opt;
    std::string diversity_output = "-";
    CLI::App* score_diversity =
        app.add_subcommand("score-diversity", "emit per-prompt log k-NN distances");
    add_select_flags(score_diversity, diversity_opt);
    score_diversity->add_option("--output", diversity_output, "output path or - for stdout");

    SelectOptions baseline_opt;
    std::string baseline_method, baseline_output;
    CLI::App* baseline = app.add_subcommand("baseline", "reference selectors");
    add_select_flags(baseline, baseline_opt);
    baseline->add_option("--method", baseline_method, "random | high-reward | loss | coreset")
        ->required();
    baseline->add_option("--output", baseline_output, "subset JSONL path")->required();

    fifa::StatsConfig stats_config;
    std::string stats_pairs, stats_embeddings, stats_cache, stats_output = "-";
    CLI::App* stats = app.add_subcommand("stats", "dataset statistics report (JSON)");
    stats->add_option("--pairs", stats_pairs, "pair JSONL file")->required();
    stats->add_option("--embeddings", stats_embeddings, "binary embedding file");
    stats->add_option("--cache", stats_cache, "llm score cache");
    stats->add_option("--model-tag", stats_config.model_tag, "model tag for cache lookups");
    stats->add_option("--knn-k", stats_config.knn_k, "k for the knn entropy estimate");
    stats->add_option("--distance-floor", stats_config.distance_floor, "min distance before log");
    stats->add_option("--threads", stats_config.threads, "worker threads");
    stats->add_option("--histogram-bins", stats_config.histogram_bins, "histogram bins");
    stats->add_option("--output", stats_output, "output path or - for stdout");

    std::size_t lab_d = 4, lab_m = 20;
    std::uint64_t lab_budget = 200, lab_trials = 100, lab_seed = 0;
    double lab_delta = 0.1, lab_noise = 1.0;
    std::string lab_output = "-";
    CLI::App* design_lab = app.add_subcommand("design-lab", "linear-design margin experiment");
    design_lab->add_option("--d", lab_d, "feature dimension");
    design_lab->add_option("--m", lab_m, "number of features");
    design_lab->add_option("--budget", lab_budget, "observations per trial");
    design_lab->add_option("--trials", lab_trials, "number of trials");
    design_lab->add_option("--seed", lab_seed, "base seed");
    design_lab->add_option("--delta", lab_delta, "confidence level");
    design_lab->add_option("--noise", lab_noise, "reward noise scale");
    design_lab->add_option("--output", lab_output, "CSV path or - for stdout");

    CLI::App* cache_cmd = app.add_subcommand("cache", "score cache utilities");
    cache_cmd->require_subcommand(1);
    std::string cache_ls_path;
    CLI::App* cache_ls = cache_cmd->add_subcommand("ls", "list cache entries");
    cache_ls->add_option("--cache", cache_ls_path, "cache file")->required();
    std::vector<std::string> cache_merge_inputs;
    std::string cache_merge_output;
    CLI::App* cache_merge = cache_cmd->add_subcommand("merge", "merge caches, last writer wins");
    cache_merge->add_option("--output", cache_merge_output, "merged cache path")->required();
    cache_merge->add_option("inputs", cache_merge_inputs, "input cache files")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (select->parsed()) return cmd_select(select, select_opt);
        if (score_margin->parsed()) return cmd_score_margin(margin_pairs, margin_output);
        if (score_quality->parsed())
            return cmd_score_quality(score_quality, quality_opt, quality_output);
        if (score_diversity->parsed())
            return cmd_score_diversity(score_diversity, diversity_opt, diversity_output);
        if (baseline->parsed())
            return cmd_baseline(baseline, baseline_opt, baseline_method, baseline_output);
        if (stats->parsed()) {
            stats_config.pairs = stats_pairs;
            stats_config.embeddings = stats_embeddings;
            stats_config.cache = stats_cache;
            return cmd_stats(stats_config, stats_output);
        }
        if (design_lab->parsed())
            return cmd_design_lab(lab_d, lab_m, lab_budget, lab_trials, lab_seed, lab_delta,
                                  lab_noise, lab_output);
        if (cache_ls->parsed()) return cmd_cache_ls(cache_ls_path);
        if (cache_merge->parsed()) return cmd_cache_merge(cache_merge_inputs, cache_merge_output);
    } catch (const fifa::EndpointUnreachable& e) {
        log_line(std::string("error: ") + e.what());
        return 3;
    } catch (const fifa::Error& e) {
        log_line(std::string("error: ") + e.what());
        return 2;
    } catch (const std::exception& e) {
        log_line(std::string("internal error: ") + e.what());
        return 1;
    }
    return 0;
}
