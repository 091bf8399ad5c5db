#pragma once

#include "reptransfer/features.hpp"
#include "reptransfer/mdp.hpp"

namespace reptransfer {

struct TransferSuite {
    std::vector<BlockMdp> sources;
    BlockMdp target;
    SpanCoefficients span;
    std::shared_ptr<const CodebookLayout> layout;

    int num_sources() const { return static_cast<int>(sources.size()); }
    double alpha_bar() const { return span.alpha_bar(); }
    double alpha_max() const { return span.alpha_max(); }

    void revoke_sources() const {
        for (const auto& s : sources) s.revoke_access();
    }
    void restore_sources() const {
        for (const auto& s : sources) s.restore_access();
    }

    nlohmann::json manifest() const;
};

// Max over (h, z, a, s') of |P*_target - sum_k alpha_k P*_k| on the recorded
// span coefficients.
double span_identity_error(const TransferSuite& suite);

struct ComblockOptions {
    int horizon = 5;
    int num_actions = 10;
    EmissionMode mode = EmissionMode::Decodable;
    int codes_per_latent = 3;  // forced to 1 in noisy mode
    double sigma = 0.1;
};

// Rich-observation combination lock: two good latents with one correct action
// each per step, an absorbing bad latent, final reward 1 on arrival at a good
// state, and an anti-shaped 0.1 w.p. 0.5 decoy on the first bad transition.
BlockMdp build_comblock(const ComblockOptions& options, Rng& rng);
BlockMdp build_comblock(int horizon, int num_actions, EmissionMode mode, Rng& rng);

// K comblocks with one shared emission process and independent optimal
// actions; the target copies each step's dynamics from a uniformly chosen
// source whose two good-state actions differ at that step.
TransferSuite build_shared_emission_suite(int num_sources, int horizon, Rng& rng,
                                          int num_actions = 4, int codes_per_latent = 3,
                                          EmissionMode mode = EmissionMode::Decodable,
                                          double sigma = 0.1);

// Identical latent dynamics, per-source disjoint observation blocks; the
// target emits each latent from a uniformly chosen source's block. Raw-state
// reachability fails by construction while the span identity holds with 0/1
// per-observation coefficients.
TransferSuite build_partitioned_suite(int num_sources, int horizon, Rng& rng,
                                      int num_actions = 10, int codes_per_latent = 3);

// Target kernel = sum_k p_k P*_k; requires sources sharing one emission process.
TransferSuite build_mixture_target(const std::vector<BlockMdp>& sources,
                                   const std::vector<double>& weights);

struct LowerBoundFamily {
    TransferSuite suite;  // sources = {R-task, B-task}, target mixes blocks
    DecoderCandidate psi1;  // correct decoder
    DecoderCandidate psi2;  // B-block permutation
    HypothesisClass hypothesis_class() const;
};

// Fixed H=2 construction: two first-layer latents with action-crossed
// transitions into a rewarding/non-rewarding pair, sources observing disjoint
// R/B blocks, target mixing both blocks w.p. 1/2.
LowerBoundFamily build_lower_bound_family();

}  // namespace reptransfer
