#include "fifa/diversity.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "fifa/errors.hpp"
#include "fifa/parallel.hpp"

namespace fifa {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

inline double reduce8(const double* acc) {
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

// Squared Euclidean distance accumulated in eight fixed lanes (dim t goes
// to lane t mod 8) and reduced in a fixed tree, so the value depends only
// on the two points, never on tiling or thread count. Returns +inf as soon
// as a periodic partial sum strictly exceeds cap; partial sums only grow,
// so skipped pairs can never enter the current top k.
double dist2_capped(const double* a, const double* b, std::size_t d, double cap) {
    double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    std::size_t t = 0;
    std::size_t next_check = 64;
    while (t + 8 <= d) {
        double d0 = a[t + 0] - b[t + 0];
        double d1 = a[t + 1] - b[t + 1];
        double d2 = a[t + 2] - b[t + 2];
        double d3 = a[t + 3] - b[t + 3];
        double d4 = a[t + 4] - b[t + 4];
        double d5 = a[t + 5] - b[t + 5];
        double d6 = a[t + 6] - b[t + 6];
        double d7 = a[t + 7] - b[t + 7];
        acc[0] += d0 * d0;
        acc[1] += d1 * d1;
        acc[2] += d2 * d2;
        acc[3] += d3 * d3;
        acc[4] += d4 * d4;
        acc[5] += d5 * d5;
        acc[6] += d6 * d6;
        acc[7] += d7 * d7;
        t += 8;
        if (t >= next_check) {
            next_check += 64;
            if (reduce8(acc) > cap) return kInf;
        }
    }
    for (; t < d; ++t) {
        double diff = a[t] - b[t];
        acc[t & 7] += diff * diff;
    }
    return reduce8(acc);
}

// Keeps `worst` as the ascending k smallest squared distances seen so far.
inline void insert_sorted(double* worst, std::uint64_t k, double d2) {
    if (d2 >= worst[k - 1]) return;
    std::uint64_t pos = k - 1;
    while (pos > 0 && worst[pos - 1] > d2) {
        worst[pos] = worst[pos - 1];
        --pos;
    }
    worst[pos] = d2;
}

bool is_space_codepoint(std::uint32_t cp) {
    switch (cp) {
        case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
        case 0xA0: case 0x1680: case 0x2028: case 0x2029: case 0x202F:
        case 0x205F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

// Decodes one UTF-8 codepoint at s[i]; advances i past it. Malformed bytes
// are consumed one at a time and reported as non-space sentinels so they
// stay inside tokens instead of being dropped.
std::uint32_t next_codepoint(const std::string& s, std::size_t& i, std::size_t& byte_len) {
    auto byte = [&](std::size_t j) { return static_cast<unsigned char>(s[j]); };
    unsigned char b0 = byte(i);
    std::size_t len = 1;
    std::uint32_t cp = b0;
    if (b0 >= 0xF0) {
        len = 4;
        cp = b0 & 0x07u;
    } else if (b0 >= 0xE0) {
        len = 3;
        cp = b0 & 0x0Fu;
    } else if (b0 >= 0xC0) {
        len = 2;
        cp = b0 & 0x1Fu;
    } else if (b0 >= 0x80) {
        ++i;
        byte_len = 1;
        return 0xFFFD;  // stray continuation byte
    }
    if (i + len > s.size()) {
        ++i;
        byte_len = 1;
        return 0xFFFD;
    }
    for (std::size_t j = 1; j < len; ++j) {
        unsigned char bj = byte(i + j);
        if ((bj & 0xC0u) != 0x80u) {
            ++i;
            byte_len = 1;
            return 0xFFFD;
        }
        cp = (cp << 6) | (bj & 0x3Fu);
    }
    i += len;
    byte_len = len;
    return cp;
}

}  // namespace

DiversityScores knn_log_distances(const EmbeddingTable& table, std::uint64_t k,
                                  double distance_floor, unsigned threads) {
    const std::size_t n = table.size();
    const std::size_t d = table.dim();
    if (k == 0) throw ConfigError("knn k must be at least 1");
    if (n < k + 1)
        throw TooFewPointsError("knn with k=" + std::to_string(k) + " needs at least " +
                                std::to_string(k + 1) + " points, got " + std::to_string(n));

    // Upcast once so float differences are exact in double arithmetic.
    std::vector<double> pts(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        const float* src = table.row(i).data();
        double* dst = pts.data() + i * d;
        for (std::size_t t = 0; t < d; ++t) dst[t] = static_cast<double>(src[t]);
    }

    std::vector<double> out(n);
    constexpr std::size_t kRowBlock = 64;
    parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
        std::vector<double> worst(kRowBlock * k);
        for (std::size_t ib = begin; ib < end; ib += kRowBlock) {
            std::size_t ie = std::min(end, ib + kRowBlock);
            std::fill(worst.begin(), worst.end(), kInf);
            // Stream every candidate row past the block so the block's
            // points and running top-k stay cache-resident.
            for (std::size_t j = 0; j < n; ++j) {
                const double* pj = pts.data() + j * d;
                for (std::size_t i = ib; i < ie; ++i) {
                    if (i == j) continue;
                    double* w = worst.data() + (i - ib) * k;
                    double d2 = dist2_capped(pts.data() + i * d, pj, d, w[k - 1]);
                    insert_sorted(w, k, d2);
                }
            }
            for (std::size_t i = ib; i < ie; ++i) {
                double dist = std::sqrt(worst[(i - ib) * k + (k - 1)]);
                out[i] = std::log(std::max(dist, distance_floor));
            }
        }
    });

    DiversityScores scores;
    scores.k = k;
    scores.per_prompt.reserve(n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        scores.per_prompt.emplace(table.ids()[i], out[i]);
        sum += out[i];
    }
    scores.entropy_estimate = sum / static_cast<double>(n);
    return scores;
}

double word_entropy(std::span<const std::string> prompts) {
    std::unordered_map<std::string, std::uint64_t> counts;
    std::uint64_t total = 0;
    std::string token;
    for (const std::string& prompt : prompts) {
        token.clear();
        std::size_t i = 0;
        auto flush = [&] {
            if (token.empty()) return;
            ++counts[token];
            ++total;
            token.clear();
        };
        while (i < prompt.size()) {
            std::size_t start = i;
            std::size_t len = 0;
            std::uint32_t cp = next_codepoint(prompt, i, len);
            if (is_space_codepoint(cp)) {
                flush();
                continue;
            }
            for (std::size_t j = 0; j < len; ++j) {
                char c = prompt[start + j];
                if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
                token.push_back(c);
            }
        }
        flush();
    }
    if (total == 0) throw EmptyCorpusError("word entropy needs at least one token");
    double h = 0.0;
    for (const auto& [tok, cnt] : counts) {
        double p = static_cast<double>(cnt) / static_cast<double>(total);
        h -= p * std::log2(p);
    }
    return h < 0.0 ? 0.0 : h;  // -0.0 guard for single-token corpora
}

double semantic_diversity(const EmbeddingTable& table) {
    const std::size_t n = table.size();
    const std::size_t d = table.dim();
    if (n < 2) throw TooFewPointsError("semantic diversity needs at least 2 vectors");
    // Mean pairwise cosine over unordered pairs equals
    // (|sum of unit vectors|^2 - n) / (n (n - 1)); one pass, no N^2 loop.
    std::vector<double> acc(d, 0.0);
    std::vector<double> unit(d);
    for (std::size_t i = 0; i < n; ++i) {
        const float* row = table.row(i).data();
        double norm2 = 0.0;
        for (std::size_t t = 0; t < d; ++t) {
            unit[t] = static_cast<double>(row[t]);
            norm2 += unit[t] * unit[t];
        }
        if (norm2 == 0.0)
            throw ZeroVectorError("zero embedding vector for id " + std::to_string(table.ids()[i]));
        double inv = 1.0 / std::sqrt(norm2);
        for (std::size_t t = 0; t < d; ++t) acc[t] += unit[t] * inv;
    }
    double sum_norm2 = 0.0;
    for (std::size_t t = 0; t < d; ++t) sum_norm2 += acc[t] * acc[t];
    double nn = static_cast<double>(n);
    double mean_cos = (sum_norm2 - nn) / (nn * (nn - 1.0));
    return std::clamp(1.0 - mean_cos, 0.0, 2.0);
}

double singular_entropy(const EmbeddingTable& table) {
    const std::size_t n = table.size();
    const std::size_t d = table.dim();
    if (n == 0) throw EmptyCorpusError("singular entropy needs at least one vector");
    Eigen::MatrixXd a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n; ++i) {
        const float* row = table.row(i).data();
        for (std::size_t t = 0; t < d; ++t)
            a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) =
                static_cast<double>(row[t]);
    }
    // Singular values via the d x d Gram matrix; cheaper than a full SVD
    // and accurate enough for an entropy of the normalized spectrum.
    Eigen::MatrixXd gram = a.transpose() * a;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
    Eigen::VectorXd evals = solver.eigenvalues();  // ascending
    std::size_t rank_cap = std::min(n, d);
    std::vector<double> sigma;
    sigma.reserve(rank_cap);
    for (std::size_t r = 0; r < rank_cap; ++r) {
        double lambda = evals(static_cast<Eigen::Index>(d - 1 - r));
        sigma.push_back(lambda > 0.0 ? std::sqrt(lambda) : 0.0);
    }
    double total = 0.0;
    for (double s : sigma) total += s;
    if (total == 0.0) return 0.0;  // all-zero matrix: degenerate spectrum
    double h = 0.0;
    for (double s : sigma) {
        if (s <= 0.0) continue;
        double p = s / total;
        h -= p * std::log2(p);
    }
    return h < 0.0 ? 0.0 : h;
}

DiversityMetrics corpus_diversity_metrics(std::span<const std::string> prompts,
                                          const EmbeddingTable& table, std::uint64_t knn_k,
                                          double distance_floor, unsigned threads) {
    DiversityMetrics m;
    try {
        m.word_entropy_bits = word_entropy(prompts);
    } catch (const EmptyCorpusError&) {
    }
    try {
        m.semantic_diversity = semantic_diversity(table);
    } catch (const Error&) {
    }
    try {
        if (table.size() > 0) m.singular_entropy_bits = singular_entropy(table);
    } catch (const EmptyCorpusError&) {
    }
    try {
        m.knn_entropy_nat =
            knn_log_distances(table, knn_k, distance_floor, threads).entropy_estimate;
    } catch (const Error&) {
    }
    return m;
}

}  // namespace fifa
