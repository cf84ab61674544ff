#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fifa/canonical.hpp"
#include "fifa/hash.hpp"
#include "fifa/io.hpp"
#include "fifa/types.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("fifa_io_test_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

std::string slurp(const fs::path& p) { return fifa::io::read_file(p); }

}  // namespace

TEST_CASE("read_pairs assigns sequential ids when absent and keeps file order") {
    TempDir dir;
    fs::path f = dir.path / "pairs.jsonl";
    write_text(f,
               R"({"prompt": "a cat", "winner": "w0", "loser": "l0", "reward_w": 2.0, "reward_l": 1.0})"
               "\n"
               R"({"prompt": "a dog", "winner": "w1", "loser": "l1", "reward_w": 3.5, "reward_l": 1.5})"
               "\n"
               R"({"prompt": "a cat", "winner": "w2", "loser": "l2", "reward_w": 1.0, "reward_l": 4.0})"
               "\n");
    fifa::io::PairDataset ds = fifa::io::read_pairs(f);
    REQUIRE(ds.size() == 3);
    CHECK(ds.pairs[0].pair_id == 0);
    CHECK(ds.pairs[1].pair_id == 1);
    CHECK(ds.pairs[2].pair_id == 2);
    CHECK(ds.pairs[0].prompt_text == "a cat");
    CHECK(ds.pairs[1].reward_w == 3.5);
    // identical prompt text -> identical prompt_id, matching the hash oracle
    CHECK(ds.pairs[0].prompt_id == ds.pairs[2].prompt_id);
    CHECK(ds.pairs[0].prompt_id == oracle::fnv1a("a cat"));
    CHECK(ds.pairs[1].prompt_id != ds.pairs[0].prompt_id);
}

TEST_CASE("read_pairs rejects a lone reward and malformed lines with their line number") {
    TempDir dir;
    fs::path partial = dir.path / "partial.jsonl";
    write_text(partial, R"({"prompt": "x", "winner": "w", "loser": "l", "reward_w": 1.0})"
                        "\n");
    CHECK_THROWS_AS(fifa::io::read_pairs(partial), fifa::SchemaError);

    fs::path broken = dir.path / "broken.jsonl";
    write_text(broken, R"({"prompt": "x", "winner": "w", "loser": "l"})"
                       "\n"
                       "not json\n");
    try {
        fifa::io::read_pairs(broken);
        FAIL("expected ParseError");
    } catch (const fifa::ParseError& e) {
        CHECK(e.line == 2);
    }

    CHECK_THROWS_AS(fifa::io::read_pairs(dir.path / "missing.jsonl"), fifa::IOError);
}

TEST_CASE("pair files round-trip with unknown keys preserved") {
    TempDir dir;
    fs::path f = dir.path / "in.jsonl";
    write_text(
        f,
        R"({"pair_id": 9, "prompt": "p", "winner": "w", "loser": "l", "reward_w": 1.5, "reward_l": 0.5, "loss": 0.25, "custom_tag": "keep-me"})"
        "\n");
    fifa::io::PairDataset ds = fifa::io::read_pairs(f);
    REQUIRE(ds.size() == 1);
    CHECK(ds.pairs[0].pair_id == 9);
    CHECK(ds.pairs[0].precomputed_loss == 0.25);
    REQUIRE(ds.extras.size() == 1);
    CHECK(ds.extras[0].contains("custom_tag"));

    fs::path out = dir.path / "out.jsonl";
    fifa::io::write_pairs(out, ds);
    fifa::io::PairDataset back = fifa::io::read_pairs(out);
    REQUIRE(back.size() == 1);
    CHECK(back.pairs[0] == ds.pairs[0]);
    CHECK(back.extras[0] == ds.extras[0]);

    // a second write of the same data is byte-identical
    fs::path out2 = dir.path / "out2.jsonl";
    fifa::io::write_pairs(out2, back);
    CHECK(slurp(out) == slurp(out2));
}

TEST_CASE("embedding files hold the exact binary layout") {
    TempDir dir;
    fs::path f = dir.path / "emb.bin";
    fifa::EmbeddingTable t(2);
    t.add(7, std::vector<float>{1.0f, 0.0f});
    fifa::io::write_embeddings(f, t);
    CHECK(fs::file_size(f) == 24 + 1 * (8 + 4 * 2));

    fifa::EmbeddingTable back = fifa::io::read_embeddings(f);
    REQUIRE(back.size() == 1);
    CHECK(back.dim() == 2);
    CHECK(back.find(7) == 0);
    CHECK(back.row(0)[0] == 1.0f);
    CHECK(back.row(0)[1] == 0.0f);

    std::string bytes = slurp(f);
    CHECK(bytes.substr(0, 8) == "FIFAEMB1");
}

TEST_CASE("embedding reader rejects corrupt files all-or-nothing") {
    TempDir dir;
    fs::path good = dir.path / "good.bin";
    fifa::EmbeddingTable t(3);
    t.add(1, std::vector<float>{1.0f, 2.0f, 3.0f});
    t.add(2, std::vector<float>{4.0f, 5.0f, 6.0f});
    fifa::io::write_embeddings(good, t);

    std::string bytes = slurp(good);

    fs::path truncated = dir.path / "truncated.bin";
    write_text(truncated, bytes.substr(0, bytes.size() - 4));
    CHECK_THROWS_AS(fifa::io::read_embeddings(truncated), fifa::FormatError);

    fs::path bad_magic = dir.path / "bad_magic.bin";
    std::string magic = bytes;
    magic[0] = 'X';
    write_text(bad_magic, magic);
    CHECK_THROWS_AS(fifa::io::read_embeddings(bad_magic), fifa::FormatError);

    fs::path bad_version = dir.path / "bad_version.bin";
    std::string version = bytes;
    version[8] = 2;
    write_text(bad_version, version);
    CHECK_THROWS_AS(fifa::io::read_embeddings(bad_version), fifa::FormatError);

    // duplicate record id: duplicate the single-record region
    fifa::EmbeddingTable one(2);
    one.add(7, std::vector<float>{1.0f, 0.0f});
    fs::path dup = dir.path / "dup.bin";
    fifa::io::write_embeddings(dup, one);
    std::string dup_bytes = slurp(dup);
    std::string record = dup_bytes.substr(24);
    dup_bytes += record;
    dup_bytes[16] = 2;  // count low byte (little-endian u64 at offset 16)
    write_text(dup, dup_bytes);
    CHECK_THROWS_AS(fifa::io::read_embeddings(dup), fifa::DuplicateIdError);
}

TEST_CASE("embedding round trip is byte-identical") {
    TempDir dir;
    fifa::EmbeddingTable t(4);
    for (std::uint64_t i = 0; i < 11; ++i)
        t.add(100 + i, std::vector<float>{0.5f * i, -1.25f * i, 3.0f, static_cast<float>(i)});
    fs::path a = dir.path / "a.bin";
    fs::path b = dir.path / "b.bin";
    fifa::io::write_embeddings(a, t);
    fifa::io::write_embeddings(b, fifa::io::read_embeddings(a));
    CHECK(slurp(a) == slurp(b));
}

TEST_CASE("manifests round-trip through JSON") {
    fifa::SelectionManifest m;
    m.config.alpha = 0.25;
    m.config.k_select = 3;
    m.config_hash = fifa::config_hash(m.config);
    m.input_count = 12;
    m.selected_count = 3;
    m.n_reward_disagreements = 2;
    m.cap_in_effect = 5;
    m.shortfall = false;
    m.margin_stats.count = 12;
    m.margin_stats.min = 0.0;
    m.margin_stats.mean = 1.5;
    m.margin_stats.max = 4.0;
    m.margin_stats.histogram.edges = {0.0, 2.0, 4.0};
    m.margin_stats.histogram.counts = {7, 5};
    m.selected_diversity.word_entropy_bits = 2.5;

    nlohmann::ordered_json j = fifa::io::manifest_to_json(m);
    fifa::SelectionManifest back = fifa::io::manifest_from_json(j);
    CHECK(fifa::io::manifest_to_json(back) == j);
    CHECK(back.config == m.config);
    CHECK(back.config_hash == m.config_hash);
    CHECK(back.selected_count == 3);
    CHECK(back.margin_stats.histogram.counts == m.margin_stats.histogram.counts);
    CHECK(back.selected_diversity.word_entropy_bits == 2.5);
    CHECK_FALSE(back.selected_diversity.semantic_diversity.has_value());
}

TEST_CASE("write_subset writes selection order plus a sibling manifest") {
    TempDir dir;
    fs::path subset = dir.path / "subset.jsonl";
    CHECK(fifa::io::manifest_path_for(subset) == dir.path / "subset.manifest.json");

    fifa::io::PairDataset ds;
    for (std::uint64_t id : {4, 2, 9}) {
        fifa::PreferencePair p;
        p.pair_id = id;
        p.prompt_text = "p" + std::to_string(id);
        p.prompt_id = fifa::prompt_id_of(p.prompt_text);
        p.winner_ref = "w";
        p.loser_ref = "l";
        p.reward_w = 1.0;
        p.reward_l = 0.0;
        ds.pairs.push_back(p);
        ds.extras.emplace_back(nlohmann::ordered_json::object());
    }
    fifa::SelectionManifest m;
    m.selected_count = 3;
    fifa::io::write_subset(subset, ds, m);

    fifa::io::PairDataset back = fifa::io::read_pairs(subset);
    REQUIRE(back.size() == 3);
    CHECK(back.pairs[0].pair_id == 4);  // order preserved, not sorted
    CHECK(back.pairs[1].pair_id == 2);
    CHECK(back.pairs[2].pair_id == 9);

    fifa::SelectionManifest mb = fifa::io::manifest_from_json(
        nlohmann::ordered_json::parse(slurp(fifa::io::manifest_path_for(subset))));
    CHECK(mb.selected_count == 3);

    // no temp files left behind by the atomic writes
    std::size_t files = 0;
    for ([[maybe_unused]] const auto& entry : fs::directory_iterator(dir.path)) ++files;
    CHECK(files == 2);
}

TEST_CASE("empty subsets still produce a file and manifest") {
    TempDir dir;
    fs::path subset = dir.path / "empty.jsonl";
    fifa::SelectionManifest m;
    m.selected_count = 0;
    fifa::io::write_subset(subset, {}, m);
    CHECK(slurp(subset).empty());
    fifa::SelectionManifest mb = fifa::io::manifest_from_json(
        nlohmann::ordered_json::parse(slurp(fifa::io::manifest_path_for(subset))));
    CHECK(mb.selected_count == 0);
}

TEST_CASE("atomic_write replaces content wholesale") {
    TempDir dir;
    fs::path f = dir.path / "doc.txt";
    fifa::io::atomic_write(f, "first");
    CHECK(slurp(f) == "first");
    fifa::io::atomic_write(f, "second version");
    CHECK(slurp(f) == "second version");
}
