#pragma once

#include <memory>
#include <string>
#include <vector>

#include "reptransfer/mdp.hpp"

namespace reptransfer {

// Canonical grouping of each layer codebook: a group is the set of codewords
// emitted together by one latent (block property). Candidate decoders relabel
// groups; the group structure itself is part of the hypothesis class.
struct CodebookLayout {
    int horizon = 0;
    std::vector<int> codes_per_layer;            // size H+1
    std::vector<std::vector<int>> code_group;    // per layer: code -> group
    std::vector<int> groups_per_layer;
    std::vector<std::vector<int>> group_canonical_label;  // per layer: group -> label
    std::vector<int> canonical_labels_per_layer;
    // noisy-mode nearest-codeword decode
    std::vector<Eigen::MatrixXd> codeword_vectors;  // per layer: D x C (may be empty)
    Eigen::MatrixXd mixing;

    int group_of(int layer, const Observation& s) const;
    // Learner-side code identity: nearest codeword in noisy mode, the code
    // itself otherwise.
    int code_of(int layer, const Observation& s) const;
    static std::shared_ptr<const CodebookLayout> from_env(const BlockMdp& env);
};

// Nearest-codeword lookup composed with a relabeling (permutation or merge) of
// codeword groups.
struct DecoderCandidate {
    std::shared_ptr<const CodebookLayout> layout;
    std::vector<std::vector<int>> relabel;  // per layer: group -> label
    std::vector<int> labels_per_layer;
    std::string name;

    int decode(int layer, const Observation& s) const {
        return relabel[layer][layout->group_of(layer, s)];
    }
    nlohmann::json to_json() const;
};

// One-hot feature map phi_h(s, a) = e_(label(s), a), either decoder-backed or
// bound to an environment's true decoder (oracle runs).
class FeatureMap {
public:
    FeatureMap() = default;
    static FeatureMap from_decoder(DecoderCandidate decoder, int num_actions);
    static FeatureMap ground_truth(const BlockMdp& env);

    int num_actions() const { return num_actions_; }
    int labels(int h) const;
    int dim(int h) const { return labels(h) * num_actions_; }
    int max_dim(int horizon) const;
    int decode_label(int h, const Observation& s) const;
    int phi_index(int h, const Observation& s, int a) const {
        return decode_label(h, s) * num_actions_ + a;
    }
    Eigen::VectorXd phi(int h, const Observation& s, int a) const;

    bool is_oracle() const { return truth_env_ != nullptr; }
    const DecoderCandidate& decoder() const { return decoder_; }
    nlohmann::json to_json() const;

private:
    DecoderCandidate decoder_;
    const BlockMdp* truth_env_ = nullptr;
    int num_actions_ = 0;
};

struct HypothesisClass {
    std::shared_ptr<const CodebookLayout> layout;
    std::vector<DecoderCandidate> candidates;  // candidate 0 is canonical
    int num_actions = 0;
    bool realizability = false;

    size_t phi_size() const { return candidates.size(); }
    // Upsilon is induced per decoder (count-based closed form), so its size
    // matches the decoder class.
    size_t upsilon_size() const { return candidates.size(); }
};

struct ClassOptions {
    // Per-layer merges of the two leading labels (strictly worse whenever the
    // merged latents have different dynamics). The terminal layer is skipped:
    // a successor-only merge represents the same kernels and only ties.
    bool merge_decoys = false;
    // Per-layer swaps of the two leading labels: pure relabelings, so exact
    // likelihood ties; they exercise the tie-reporting machinery.
    bool gauge_swaps = false;
    // Per-layer per-non-primary-block label swaps (partitioned suites).
    bool block_masks = false;
    size_t max_candidates = 4096;
};

HypothesisClass make_decoder_class(std::shared_ptr<const CodebookLayout> layout, int num_actions,
                                   const ClassOptions& options);

// --- datasets -------------------------------------------------------------------

struct TransitionDataset {
    enum class Mode { Cross, OnPolicy };
    int task_i = 0;  // task that generated s' (and the roll-in)
    int task_j = 0;  // task that generated s
    Mode mode = Mode::OnPolicy;
    struct Tuple {
        Observation s;
        int a;
        Observation next;
    };
    std::vector<std::vector<Tuple>> per_h;

    int horizon() const { return static_cast<int>(per_h.size()); }
    size_t size(int h) const { return per_h[h].size(); }
    size_t total() const {
        size_t n = 0;
        for (const auto& v : per_h) n += v.size();
        return n;
    }

    // Columnar CSV of (h, s, a, s') code identities. In noisy mode codes are
    // the learner-side nearest-codeword indices resolved through `layout`.
    std::string to_csv(const CodebookLayout* layout = nullptr) const;
    static TransitionDataset from_csv(const std::string& text);
};

// --- learned model ----------------------------------------------------------------

class LinearMdpModel {
public:
    FeatureMap phi;
    // per h = 0..H-1: (L_h * A) x L_{h+1} smoothed transition probabilities
    std::vector<Eigen::MatrixXd> trans;
    // per layer 1..H (index by layer): L x |support(layer)| smoothed emissions
    std::vector<Eigen::MatrixXd> emit;
    std::shared_ptr<const SupportIndex> support;
    // known initial observation distribution (filled by callers that own the env)
    std::vector<int> initial_codes;
    std::vector<double> initial_probs;
    // raw counts for serialization / incremental updates
    std::vector<Eigen::MatrixXd> trans_counts;
    std::vector<Eigen::MatrixXd> emit_counts;

    int horizon() const { return static_cast<int>(trans.size()); }
    // mu_h over the layer-(h+1) support: dim_h x |support|
    Eigen::MatrixXd mu(int h) const { return trans[h] * emit[h + 1]; }
    // model kernel row over the layer-(h+1) support
    Eigen::VectorXd kernel(int h, const Observation& s, int a) const;

    nlohmann::json to_json() const;
};

constexpr double kLaplaceSmoothing = 1e-6;

// Exact linear-MDP view of a decodable environment: true latent transitions
// and emissions behind a label-preserving candidate decoder (canonical by
// default). No smoothing; full codebook support.
LinearMdpModel exact_model(const BlockMdp& env);
LinearMdpModel exact_model(const BlockMdp& env, const DecoderCandidate& decoder);

// Count-based closed-form (T-hat, o-hat) for a fixed decoder. extra_layer0
// widens the layer-0 support (e.g. with the known initial support).
LinearMdpModel fit_count_model(const std::vector<const TransitionDataset*>& data, int task,
                               const DecoderCandidate& decoder, int num_actions,
                               const std::vector<int>* extra_layer0 = nullptr);

struct MleResult {
    LinearMdpModel model;
    int selected = 0;
    std::vector<int> ties;       // includes selected
    std::vector<double> loglik;  // per candidate
};

struct MultiMleResult {
    FeatureMap phi;
    std::vector<LinearMdpModel > models;  // per task, shared decoder
    int selected = 0;
    std::vector<int> ties;
    std::vector<double> loglik;
};

MleResult mle_single_task(const TransitionDataset& data, const HypothesisClass& cls);

MultiMleResult mle_multitask(const std::vector<TransitionDataset>& datasets,
                             const HypothesisClass& cls, int num_tasks);

// zeta_n = (log(|Phi|/delta) + K log|Upsilon|) / n, unit leading constant.
double mle_bound_zeta(long n, double size_phi, double size_upsilon, int num_tasks, double delta);

// Exact per-h expected TV between the model kernel and the true kernel under
// the policy occupancy. Decodable mode only. TV = (1/2) L1.
std::vector<double> model_tv_error(const LinearMdpModel& model, const BlockMdp& env,
                                   const Policy& policy);

// The span-combined embedding mu~_h(s') = sum_k alpha_k(s') mu-hat_k(s'),
// an analysis object used to measure the transfer model error empirically.
struct TargetSpanModel {
    FeatureMap phi;
    // per h: dim_h x C_{h+1} over the full layer codebook (zero off-support)
    std::vector<Eigen::MatrixXd> mu_tilde;
};

struct SpanCoefficients {
    bool present = false;
    // per h = 0..H-1: K x C_{h+1}
    std::vector<Eigen::MatrixXd> alpha;
    double alpha_bar() const;
    double alpha_max() const;
};

TargetSpanModel target_span_model(const std::vector<LinearMdpModel>& mu_hats,
                                  const SpanCoefficients& span);

// Per-h expected TV between phi^T mu~ and the true target kernel under a policy.
std::vector<double> span_model_tv_error(const TargetSpanModel& span_model, const BlockMdp& env,
                                        const Policy& policy);

}  // namespace reptransfer
