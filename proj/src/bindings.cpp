#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "fifa/canonical.hpp"
#include "fifa/design.hpp"
#include "fifa/diversity.hpp"
#include "fifa/hash.hpp"
#include "fifa/io.hpp"
#include "fifa/margin.hpp"
#include "fifa/pipeline.hpp"
#include "fifa/quality.hpp"
#include "fifa/selection.hpp"
#include "fifa/types.hpp"

namespace py = pybind11;

namespace {

fifa::EmbeddingTable table_from_rows(const std::vector<std::vector<double>>& rows) {
    fifa::EmbeddingTable table;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::vector<float> row(rows[i].begin(), rows[i].end());
        table.add(static_cast<std::uint64_t>(i), row);
    }
    return table;
}

}  // namespace

PYBIND11_MODULE(fifa_core, m) {
    m.doc() = "Preference-pair filtering core: margins, llm-score protocol, k-NN diversity, "
              "capped top-K selection, and the linear-design lab.";
    m.attr("__version__") = std::string(fifa::kToolVersion);
    m.attr("QUALITY_PROMPT_TEMPLATE") = std::string(fifa::kQualityPromptTemplate);

    py::class_<fifa::FilterConfig>(m, "FilterConfig")
        .def(py::init<>())
        .def_readwrite("alpha", &fifa::FilterConfig::alpha)
        .def_readwrite("gamma", &fifa::FilterConfig::gamma)
        .def_readwrite("k_select", &fifa::FilterConfig::k_select)
        .def_readwrite("knn_k", &fifa::FilterConfig::knn_k)
        .def_readwrite("prompt_cap", &fifa::FilterConfig::prompt_cap)
        .def_readwrite("seed", &fifa::FilterConfig::seed)
        .def_readwrite("distance_floor", &fifa::FilterConfig::distance_floor);

    m.def("canonical_bytes", &fifa::canonical_bytes, py::arg("config"),
          "Canonical '\\n'-separated byte form of a config.");
    m.def("config_hash", &fifa::config_hash, py::arg("config"),
          "FNV-1a 64 over the canonical bytes.");
    m.def(
        "prompt_id_of", [](const std::string& text) { return fifa::prompt_id_of(text); },
        py::arg("prompt_text"), "FNV-1a 64 of the trimmed prompt text.");

    // --- margin / loss formulas ---
    m.def("reward_margin", &fifa::reward_margin, py::arg("reward_w"), py::arg("reward_l"));
    m.def("cdpo_weight", &fifa::cdpo_weight, py::arg("reward_w"), py::arg("reward_l"),
          py::arg("temperature") = 0.01);
    m.def(
        "dpo_pair_loss",
        [](double ew_theta, double ew_ref, double el_theta, double el_ref, double beta_t_omega) {
            return fifa::dpo_pair_loss({ew_theta, ew_ref, el_theta, el_ref, beta_t_omega});
        },
        py::arg("ew_theta"), py::arg("ew_ref"), py::arg("el_theta"), py::arg("el_ref"),
        py::arg("beta_t_omega") = 1.0);
    m.def("cdpo_pair_loss", &fifa::cdpo_pair_loss, py::arg("loss_wl"), py::arg("loss_lw"),
          py::arg("omega"));
    m.def(
        "margin_histogram",
        [](const std::vector<double>& margins, std::size_t n_bins) {
            fifa::Histogram h = fifa::margin_histogram(margins, n_bins);
            return std::make_tuple(h.edges, h.counts);
        },
        py::arg("margins"), py::arg("n_bins"), "Returns (edges, counts).");

    // --- llm quality protocol ---
    m.def(
        "render_quality_prompt",
        [](const std::string& text) { return fifa::render_quality_prompt(text); },
        py::arg("prompt_text"));
    m.def(
        "parse_rating", [](const std::string& text) { return fifa::parse_rating(text); },
        py::arg("response_text"));

    // --- diversity ---
    m.def(
        "word_entropy",
        [](const std::vector<std::string>& prompts) { return fifa::word_entropy(prompts); },
        py::arg("prompts"), "Pooled unigram Shannon entropy in bits.");
    m.def(
        "semantic_diversity",
        [](const std::vector<std::vector<double>>& rows) {
            return fifa::semantic_diversity(table_from_rows(rows));
        },
        py::arg("vectors"), "1 - mean pairwise cosine similarity.");
    m.def(
        "singular_entropy",
        [](const std::vector<std::vector<double>>& rows) {
            return fifa::singular_entropy(table_from_rows(rows));
        },
        py::arg("vectors"), "Entropy (bits) of the normalized singular values.");
    m.def(
        "knn_log_distances",
        [](const std::vector<std::vector<double>>& rows, std::uint64_t k, double distance_floor,
           unsigned threads) {
            fifa::EmbeddingTable table = table_from_rows(rows);
            fifa::DiversityScores scores =
                fifa::knn_log_distances(table, k, distance_floor, threads);
            std::vector<double> out(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i)
                out[i] = scores.per_prompt.at(static_cast<std::uint64_t>(i));
            return std::make_tuple(out, scores.entropy_estimate);
        },
        py::arg("vectors"), py::arg("k") = 1, py::arg("distance_floor") = 1e-12,
        py::arg("threads") = 0,
        "Returns (per-point natural-log k-NN distances, their mean).");

    // --- selection ---
    m.def(
        "select_top_k",
        [](const std::vector<std::tuple<std::uint64_t, std::uint64_t, double>>& scored,
           std::uint64_t k, std::uint64_t cap) {
            std::vector<fifa::ScoredPair> pairs;
            pairs.reserve(scored.size());
            for (const auto& [pair_id, prompt_id, importance] : scored) {
                fifa::ScoredPair sp;
                sp.pair_id = pair_id;
                sp.prompt_id = prompt_id;
                sp.importance = importance;
                pairs.push_back(sp);
            }
            fifa::SelectionResult r = fifa::select_top_k(pairs, k, cap);
            py::dict out;
            out["selected"] = r.selected;
            out["cap_in_effect"] = r.cap_in_effect;
            out["cap_doublings"] = r.cap_doublings;
            out["shortfall"] = r.shortfall;
            return out;
        },
        py::arg("scored"), py::arg("k"), py::arg("cap") = 5,
        "scored: list of (pair_id, prompt_id, importance) tuples.");
    m.def(
        "kcenter_greedy",
        [](const std::vector<std::vector<double>>& rows, std::uint64_t k) {
            return fifa::kcenter_greedy(table_from_rows(rows), k);
        },
        py::arg("vectors"), py::arg("k"),
        "Indices of k farthest-point centers (seeded at index 0).");

    // --- design lab ---
    m.def(
        "optimize_design",
        [](const std::vector<std::vector<double>>& features, std::uint64_t max_iters,
           double tol) {
            fifa::design::DesignResult r = fifa::design::optimize_design(features, max_iters, tol);
            py::dict out;
            out["pi"] = r.pi.pi;
            out["g"] = r.g;
            out["iterations"] = r.iterations;
            out["converged"] = r.converged;
            return out;
        },
        py::arg("features"), py::arg("max_iters") = 50000, py::arg("tol") = 1e-4);
    m.def(
        "g_value",
        [](const std::vector<double>& pi, const std::vector<std::vector<double>>& features) {
            return fifa::design::g_value({pi}, features);
        },
        py::arg("pi"), py::arg("features"));
    m.def(
        "sample_allocation",
        [](const std::vector<double>& pi, double g, double epsilon, double delta) {
            return fifa::design::sample_allocation({pi}, g, epsilon, delta);
        },
        py::arg("pi"), py::arg("g"), py::arg("epsilon"), py::arg("delta"));
    m.def(
        "run_margin_experiment_csv",
        [](std::size_t d, std::size_t feature_count, std::uint64_t budget, std::uint64_t trials,
           std::uint64_t seed, double delta, double noise) {
            return fifa::design::run_margin_experiment(d, feature_count, budget, trials, seed,
                                                       delta, noise)
                .csv();
        },
        py::arg("d") = 4, py::arg("m") = 20, py::arg("budget") = 200, py::arg("trials") = 100,
        py::arg("seed") = 0, py::arg("delta") = 0.1, py::arg("noise") = 1.0);

    // --- pipeline ---
    m.def(
        "run_select",
        [](const std::string& config_file) {
            fifa::RunConfig config = fifa::load_run_config(config_file);
            fifa::SelectOutcome outcome = fifa::run_select(config);
            py::dict out;
            out["manifest"] = fifa::io::manifest_to_json(outcome.manifest).dump();
            out["subset_path"] = outcome.subset_path.string();
            out["manifest_path"] = outcome.manifest_path.string();
            return out;
        },
        py::arg("config_file"), "Full pipeline from a run config file; returns output paths "
                                "and the manifest JSON.");
    m.def(
        "run_stats",
        [](const std::string& pairs, const std::string& embeddings, const std::string& cache) {
            fifa::StatsConfig config;
            config.pairs = pairs;
            config.embeddings = embeddings;
            config.cache = cache;
            return fifa::run_stats(config).dump(2);
        },
        py::arg("pairs"), py::arg("embeddings") = std::string(),
        py::arg("cache") = std::string(), "Dataset statistics report as JSON text.");
}
