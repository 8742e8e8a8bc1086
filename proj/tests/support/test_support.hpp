#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rltc/rng.hpp"

namespace rltc::testsupport {

inline std::vector<uint8_t> random_bytes(Rng& rng, size_t n) {
    std::vector<uint8_t> out(n);
    for (auto& b : out) b = static_cast<uint8_t>(rng.below(256));
    return out;
}

inline std::vector<uint8_t> repetitive_bytes(Rng& rng, size_t n) {
    // short repeated motif with occasional substitutions
    size_t motif_len = 1 + rng.below(8);
    std::vector<uint8_t> motif = random_bytes(rng, motif_len);
    std::vector<uint8_t> out(n);
    for (size_t i = 0; i < n; ++i) {
        out[i] = motif[i % motif_len];
        if (rng.uniform() < 0.02) out[i] = static_cast<uint8_t>(rng.below(256));
    }
    return out;
}

// Mixed fuzz corpus: random, repetitive, all-zero, all-0xFF, ramps.
inline std::vector<uint8_t> adversarial_bytes(Rng& rng, size_t n) {
    switch (rng.below(5)) {
    case 0:
        return random_bytes(rng, n);
    case 1:
        return repetitive_bytes(rng, n);
    case 2:
        return std::vector<uint8_t>(n, 0);
    case 3:
        return std::vector<uint8_t>(n, 0xFF);
    default: {
        std::vector<uint8_t> out(n);
        for (size_t i = 0; i < n; ++i) out[i] = static_cast<uint8_t>(i & 0xFF);
        return out;
    }
    }
}

// Word-salad text with a Zipf-flavored lexicon; useful as an enwik8 stand-in
// when the real corpus is not on disk (order-0 entropy well under 8 bits/byte).
inline std::vector<uint8_t> english_like_text(Rng& rng, size_t n) {
    static const char* kWords[] = {
        "the",  "of",       "and",   "in",     "to",       "a",        "is",     "was",
        "for",  "as",       "on",    "with",   "by",       "that",     "from",   "at",
        "it",   "his",      "an",    "were",   "which",    "are",      "this",   "also",
        "be",   "or",       "has",   "had",    "first",    "one",      "their",  "its",
        "new",  "after",    "who",   "they",   "two",      "her",      "she",    "been",
        "time", "other",    "when",  "during", "into",     "school",   "more",   "all",
        "city", "national", "state", "year",   "world",    "history",  "would",  "where",
        "most", "between",  "war",   "used",   "however",  "article",  "system", "century",
        "name", "people",   "many",  "known",  "called",   "links",    "external"};
    constexpr size_t kWordCount = sizeof(kWords) / sizeof(kWords[0]);
    std::vector<uint8_t> out;
    out.reserve(n + 16);
    while (out.size() < n) {
        // sampling the square of a uniform skews toward the head of the list
        double u = rng.uniform();
        size_t idx = static_cast<size_t>(u * u * kWordCount);
        if (idx >= kWordCount) idx = kWordCount - 1;
        for (const char* c = kWords[idx]; *c; ++c) out.push_back(static_cast<uint8_t>(*c));
        if (rng.uniform() < 0.08)
            out.push_back(rng.uniform() < 0.5 ? '.' : ',');
        out.push_back(rng.uniform() < 0.04 ? '\n' : ' ');
    }
    out.resize(n);
    return out;
}

} // namespace rltc::testsupport
