#include "fifa/io.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "fifa/canonical.hpp"
#include "fifa/errors.hpp"
#include "fifa/hash.hpp"

namespace fifa::io {

using nlohmann::ordered_json;

namespace {

constexpr std::array<char, 8> kEmbMagic = {'F', 'I', 'F', 'A', 'E', 'M', 'B', '1'};
constexpr std::uint32_t kEmbVersion = 1;
constexpr std::size_t kEmbHeaderSize = 24;

constexpr const char* kKnownKeys[] = {"pair_id", "prompt",   "winner", "loser",
                                      "reward_w", "reward_l", "loss"};

bool is_known_key(const std::string& k) {
    for (const char* kk : kKnownKeys)
        if (k == kk) return true;
    return false;
}

double require_number(const ordered_json& v, std::size_t line, const char* key) {
    if (!v.is_number()) throw SchemaError(line, std::string(key) + " must be a number");
    double d = v.get<double>();
    if (!std::isfinite(d)) throw SchemaError(line, std::string(key) + " must be finite");
    return d;
}

// little-endian scalar access
std::uint32_t load_u32le(const unsigned char* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
           std::uint32_t(p[3]) << 24;
}
std::uint64_t load_u64le(const unsigned char* p) {
    return std::uint64_t(load_u32le(p)) | std::uint64_t(load_u32le(p + 4)) << 32;
}
float load_f32le(const unsigned char* p) {
    std::uint32_t u = load_u32le(p);
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}
void store_u32le(std::string& out, std::uint32_t v) {
    out.push_back(char(v & 0xff));
    out.push_back(char(v >> 8 & 0xff));
    out.push_back(char(v >> 16 & 0xff));
    out.push_back(char(v >> 24 & 0xff));
}
void store_u64le(std::string& out, std::uint64_t v) {
    store_u32le(out, std::uint32_t(v & 0xffffffffu));
    store_u32le(out, std::uint32_t(v >> 32));
}
void store_f32le(std::string& out, float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    store_u32le(out, u);
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IOError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (!in.good() && !in.eof()) throw IOError("read failed: " + path.string());
    return std::move(ss).str();
}

void atomic_write(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IOError("cannot open " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out.good()) throw IOError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IOError("rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

PairDataset read_pairs(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IOError("cannot open " + path.string());

    PairDataset ds;
    std::string line;
    std::size_t line_no = 0;
    std::uint64_t next_seq_id = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;

        ordered_json j = ordered_json::parse(line, nullptr, false);
        if (j.is_discarded()) throw ParseError(line_no, "invalid JSON");
        if (!j.is_object()) throw SchemaError(line_no, "line is not a JSON object");

        PreferencePair p;
        if (auto it = j.find("pair_id"); it != j.end() && !it->is_null()) {
            if (!it->is_number_unsigned())
                throw SchemaError(line_no, "pair_id must be an unsigned integer");
            p.pair_id = it->get<std::uint64_t>();
        } else {
            p.pair_id = next_seq_id;
        }
        ++next_seq_id;

        auto pt = j.find("prompt");
        if (pt == j.end() || !pt->is_string())
            throw SchemaError(line_no, "missing required string key 'prompt'");
        p.prompt_text = pt->get<std::string>();
        p.prompt_id = prompt_id_of(p.prompt_text);

        auto wr = j.find("winner");
        auto lr = j.find("loser");
        if (wr == j.end() || !wr->is_string())
            throw SchemaError(line_no, "missing required string key 'winner'");
        if (lr == j.end() || !lr->is_string())
            throw SchemaError(line_no, "missing required string key 'loser'");
        p.winner_ref = wr->get<std::string>();
        p.loser_ref = lr->get<std::string>();

        const bool has_w = j.contains("reward_w") && !j["reward_w"].is_null();
        const bool has_l = j.contains("reward_l") && !j["reward_l"].is_null();
        if (has_w != has_l)
            throw SchemaError(line_no, "reward_w and reward_l must be present together");
        if (has_w) {
            p.reward_w = require_number(j["reward_w"], line_no, "reward_w");
            p.reward_l = require_number(j["reward_l"], line_no, "reward_l");
        }
        if (auto it = j.find("loss"); it != j.end() && !it->is_null())
            p.precomputed_loss = require_number(*it, line_no, "loss");

        ordered_json extra = ordered_json::object();
        for (auto& [k, v] : j.items())
            if (!is_known_key(k)) extra[k] = v;

        ds.pairs.push_back(std::move(p));
        ds.extras.push_back(std::move(extra));
    }
    if (in.bad()) throw IOError("read failed: " + path.string());
    return ds;
}

namespace {

ordered_json pair_to_json(const PreferencePair& p, const ordered_json& extra) {
    ordered_json j;
    j["pair_id"] = p.pair_id;
    j["prompt"] = p.prompt_text;
    j["winner"] = p.winner_ref;
    j["loser"] = p.loser_ref;
    if (p.reward_w) j["reward_w"] = *p.reward_w;
    if (p.reward_l) j["reward_l"] = *p.reward_l;
    if (p.precomputed_loss) j["loss"] = *p.precomputed_loss;
    for (auto& [k, v] : extra.items()) j[k] = v;
    return j;
}

std::string pairs_to_jsonl(const PairDataset& ds) {
    std::string out;
    for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
        const ordered_json& extra =
            i < ds.extras.size() ? ds.extras[i] : ordered_json(ordered_json::object());
        out += pair_to_json(ds.pairs[i], extra).dump();
        out += '\n';
    }
    return out;
}

}  // namespace

void write_pairs(const std::filesystem::path& path, const PairDataset& dataset) {
    atomic_write(path, pairs_to_jsonl(dataset));
}

EmbeddingTable read_embeddings(const std::filesystem::path& path) {
    const std::string buf = read_file(path);
    if (buf.size() < kEmbHeaderSize) throw FormatError("embedding file truncated header");
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
    if (std::memcmp(p, kEmbMagic.data(), 8) != 0) throw FormatError("bad embedding magic");
    const std::uint32_t version = load_u32le(p + 8);
    if (version != kEmbVersion)
        throw FormatError("unsupported embedding version " + std::to_string(version));
    const std::uint32_t dim = load_u32le(p + 12);
    const std::uint64_t count = load_u64le(p + 16);
    if (dim == 0) throw FormatError("embedding dim must be >= 1");
    const std::uint64_t record = 8 + 4ull * dim;
    if (buf.size() != kEmbHeaderSize + count * record)
        throw FormatError("embedding file length " + std::to_string(buf.size()) +
                          " does not match header (expected " +
                          std::to_string(kEmbHeaderSize + count * record) + ")");

    EmbeddingTable table(dim);
    table.reserve(count);
    std::vector<float> vec(dim);
    const unsigned char* rec = p + kEmbHeaderSize;
    for (std::uint64_t i = 0; i < count; ++i, rec += record) {
        const std::uint64_t id = load_u64le(rec);
        for (std::uint32_t d = 0; d < dim; ++d) vec[d] = load_f32le(rec + 8 + 4ull * d);
        table.add(id, vec);  // throws DuplicateIdError / FormatError
    }
    return table;
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
    std::string out;
    out.reserve(kEmbHeaderSize + table.size() * (8 + 4ull * table.dim()));
    out.append(kEmbMagic.data(), 8);
    store_u32le(out, kEmbVersion);
    store_u32le(out, table.dim());
    store_u64le(out, table.size());
    for (std::size_t i = 0; i < table.size(); ++i) {
        store_u64le(out, table.id_at(i));
        for (float f : table.row(i)) store_f32le(out, f);
    }
    atomic_write(path, out);
}

namespace {

ordered_json histogram_to_json(const Histogram& h) {
    return ordered_json{{"edges", h.edges}, {"counts", h.counts}};
}

Histogram histogram_from_json(const ordered_json& j) {
    Histogram h;
    h.edges = j.at("edges").get<std::vector<double>>();
    h.counts = j.at("counts").get<std::vector<std::uint64_t>>();
    return h;
}

ordered_json stats_to_json(const SummaryStats& s) {
    ordered_json j;
    j["count"] = s.count;
    if (s.count == 0) {
        j["min"] = nullptr;
        j["mean"] = nullptr;
        j["max"] = nullptr;
        j["histogram"] = nullptr;
    } else {
        j["min"] = s.min;
        j["mean"] = s.mean;
        j["max"] = s.max;
        j["histogram"] = histogram_to_json(s.histogram);
    }
    return j;
}

SummaryStats stats_from_json(const ordered_json& j) {
    SummaryStats s;
    s.count = j.at("count").get<std::uint64_t>();
    if (s.count > 0) {
        s.min = j.at("min").get<double>();
        s.mean = j.at("mean").get<double>();
        s.max = j.at("max").get<double>();
        s.histogram = histogram_from_json(j.at("histogram"));
    }
    return s;
}

ordered_json optional_to_json(const std::optional<double>& v) {
    if (v) return *v;
    return nullptr;
}

std::optional<double> optional_from_json(const ordered_json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

ordered_json config_to_json(const FilterConfig& c) {
    ordered_json j;
    j["alpha"] = c.alpha;
    j["gamma"] = c.gamma;
    j["k_select"] = c.k_select;
    j["knn_k"] = c.knn_k;
    j["prompt_cap"] = c.prompt_cap;
    j["seed"] = c.seed;
    j["distance_floor"] = c.distance_floor;
    return j;
}

FilterConfig config_from_json(const ordered_json& j) {
    FilterConfig c;
    c.alpha = j.at("alpha").get<double>();
    c.gamma = j.at("gamma").get<double>();
    c.k_select = j.at("k_select").get<std::uint64_t>();
    c.knn_k = j.at("knn_k").get<std::uint64_t>();
    c.prompt_cap = j.at("prompt_cap").get<std::uint64_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.distance_floor = j.at("distance_floor").get<double>();
    return c;
}

}  // namespace

ordered_json manifest_to_json(const SelectionManifest& m) {
    ordered_json j;
    j["tool_version"] = m.tool_version;
    j["config_hash"] = m.config_hash;
    j["config"] = config_to_json(m.config);
    j["input_count"] = m.input_count;
    j["selected_count"] = m.selected_count;
    j["n_reward_disagreements"] = m.n_reward_disagreements;
    j["excluded_unscored"] = m.excluded_unscored;
    j["cap_in_effect"] = m.cap_in_effect;
    j["cap_doublings"] = m.cap_doublings;
    j["shortfall"] = m.shortfall;
    j["margin_stats"] = stats_to_json(m.margin_stats);
    j["llm_score_stats"] = stats_to_json(m.llm_score_stats);
    j["diversity_stats"] = stats_to_json(m.diversity_stats);
    j["importance_stats"] = stats_to_json(m.importance_stats);
    j["selected_diversity"] =
        ordered_json{{"word_entropy_bits", optional_to_json(m.selected_diversity.word_entropy_bits)},
                     {"semantic_diversity", optional_to_json(m.selected_diversity.semantic_diversity)},
                     {"singular_entropy_bits",
                      optional_to_json(m.selected_diversity.singular_entropy_bits)},
                     {"knn_entropy_nat", optional_to_json(m.selected_diversity.knn_entropy_nat)}};
    return j;
}

SelectionManifest manifest_from_json(const ordered_json& j) {
    SelectionManifest m;
    m.tool_version = j.at("tool_version").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::uint64_t>();
    m.config = config_from_json(j.at("config"));
    m.input_count = j.at("input_count").get<std::uint64_t>();
    m.selected_count = j.at("selected_count").get<std::uint64_t>();
    m.n_reward_disagreements = j.at("n_reward_disagreements").get<std::uint64_t>();
    m.excluded_unscored = j.at("excluded_unscored").get<std::uint64_t>();
    m.cap_in_effect = j.at("cap_in_effect").get<std::uint64_t>();
    m.cap_doublings = j.at("cap_doublings").get<std::uint64_t>();
    m.shortfall = j.at("shortfall").get<bool>();
    m.margin_stats = stats_from_json(j.at("margin_stats"));
    m.llm_score_stats = stats_from_json(j.at("llm_score_stats"));
    m.diversity_stats = stats_from_json(j.at("diversity_stats"));
    m.importance_stats = stats_from_json(j.at("importance_stats"));
    const auto& d = j.at("selected_diversity");
    m.selected_diversity.word_entropy_bits = optional_from_json(d.at("word_entropy_bits"));
    m.selected_diversity.semantic_diversity = optional_from_json(d.at("semantic_diversity"));
    m.selected_diversity.singular_entropy_bits =
        optional_from_json(d.at("singular_entropy_bits"));
    m.selected_diversity.knn_entropy_nat = optional_from_json(d.at("knn_entropy_nat"));
    return m;
}

std::filesystem::path manifest_path_for(const std::filesystem::path& subset_path) {
    auto p = subset_path;
    p.replace_extension();
    p += ".manifest.json";
    return p;
}

void write_subset(const std::filesystem::path& subset_path, const PairDataset& subset,
                  const SelectionManifest& manifest) {
    atomic_write(subset_path, pairs_to_jsonl(subset));
    atomic_write(manifest_path_for(subset_path), manifest_to_json(manifest).dump(2) + "\n");
}

}  // namespace fifa::io
