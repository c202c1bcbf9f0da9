#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace uqeval {

struct TokenDistribution;

// A validated probability distribution: entries in [0,1], sum within 1e-9
// of 1, at least one entry.
class ProbVector {
public:
    // Validates on construction; throws UqError(domain) on violation.
    explicit ProbVector(std::vector<double> probs);

    // Skips validation; for internal use where the invariant holds by
    // construction (softmax output).
    static ProbVector unchecked(std::vector<double> probs);

    std::span<const double> probs() const { return probs_; }
    std::size_t support_size() const { return probs_.size(); }

private:
    ProbVector() = default;
    std::vector<double> probs_;
};

// p_i = exp(z_i - max z) / sum_j exp(z_j - max z). Empty or non-finite
// input -> UqError(domain).
ProbVector softmax(std::span<const double> logits);

// Shannon entropy in nats, -sum p ln p with 0 ln 0 := 0. Always in [0, ln k].
double entropy(const ProbVector& p);

enum class TopkPolicy { renormalize, tail_bucket };

struct TopkEntropy {
    double entropy;          // nats
    int effective_support;   // k actually used (includes the tail pseudo-token)
};

// Entropy of a (possibly truncated) top-k logprob distribution.
// renormalize: rescale observed mass to 1. tail_bucket: treat the missing
// mass as one pseudo-token when it exceeds 1e-9.
// Observed mass above 1 + 1e-6 -> UqError(data).
TopkEntropy entropy_from_topk(const TokenDistribution& dist, TopkPolicy policy);

// Inverted normalized entropy: 1 - u/ln(k), clamped to [0,1].
// Requires k >= 2 and 0 <= u <= ln k + 1e-9; otherwise UqError(domain).
double confidence(double entropy_nats, int support);

} // namespace uqeval
