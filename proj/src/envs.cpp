#include "reptransfer/envs.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace reptransfer {

namespace {

// Comblock latent layout: layer 0 holds the two good latents, later layers add
// the absorbing bad latent as index 2.
std::vector<int> comblock_layers(int horizon) {
    std::vector<int> layers(horizon + 1, 3);
    layers[0] = 2;
    return layers;
}

Eigen::MatrixXd comblock_transition(int z_here, int num_actions, int a0, int a1) {
    // rows (z * A + a) over latents at the next layer {good0, good1, bad}
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(z_here * num_actions, 3);
    const int optimal[2] = {a0, a1};
    for (int z = 0; z < z_here; ++z) {
        for (int a = 0; a < num_actions; ++a) {
            int row = z * num_actions + a;
            if (z < 2 && a == optimal[z]) {
                t(row, 0) = 0.5;
                t(row, 1) = 0.5;
            } else {
                t(row, 2) = 1.0;
            }
        }
    }
    return t;
}

// Block-diagonal uniform emission: latent z owns codes [z*cpl, (z+1)*cpl).
Eigen::MatrixXd uniform_group_emission(int latents, int codes_per_latent) {
    Eigen::MatrixXd em = Eigen::MatrixXd::Zero(latents, latents * codes_per_latent);
    for (int z = 0; z < latents; ++z)
        for (int c = 0; c < codes_per_latent; ++c) em(z, z * codes_per_latent + c) = 1.0 / codes_per_latent;
    return em;
}

int next_pow2(int n) {
    int p = 1;
    while (p < n) p *= 2;
    return p;
}

Eigen::MatrixXd hadamard(int dim) {
    Eigen::MatrixXd h(1, 1);
    h(0, 0) = 1.0;
    while (h.rows() < dim) {
        Eigen::MatrixXd next(h.rows() * 2, h.cols() * 2);
        next << h, h, h, -h;
        h = next;
    }
    return h / std::sqrt(static_cast<double>(dim));
}

Reward comblock_reward(int horizon, int num_actions, const std::vector<std::array<int, 2>>& optimal) {
    Reward r;
    r.step.resize(horizon);
    for (int h = 0; h < horizon; ++h) {
        int z_here = h == 0 ? 2 : 3;
        r.step[h].assign(z_here, std::vector<RewardEntry>(num_actions, RewardEntry{0.0, 1.0}));
        for (int z = 0; z < 2; ++z) {
            for (int a = 0; a < num_actions; ++a) {
                if (a != optimal[h][z]) r.step[h][z][a] = RewardEntry{0.1, 0.5};  // anti-shaped decoy
            }
        }
    }
    r.terminal.assign(3, RewardEntry{0.0, 1.0});
    r.terminal[0] = RewardEntry{1.0, 1.0};
    r.terminal[1] = RewardEntry{1.0, 1.0};
    return r;
}

void attach_noisy_emission(BlockMdp& env, double sigma) {
    env.sigma = sigma;
    int dim = next_pow2(3 + env.horizon + 1 + 1);
    env.mixing = hadamard(dim);
    env.codeword_vectors.resize(env.horizon + 1);
    for (int layer = 0; layer <= env.horizon; ++layer) {
        int codes = env.codes_at(layer);
        Eigen::MatrixXd words = Eigen::MatrixXd::Zero(dim, codes);
        for (int c = 0; c < codes; ++c) {
            words(env.code_latent[layer][c], c) = 1.0;
            words(3 + layer, c) = 1.0;
        }
        env.codeword_vectors[layer] = words;
    }
}

std::vector<std::array<int, 2>> random_optimal_actions(int horizon, int num_actions, Rng& rng) {
    std::vector<std::array<int, 2>> optimal(horizon);
    for (int h = 0; h < horizon; ++h) {
        optimal[h][0] = rng.uniform_int(num_actions);
        optimal[h][1] = rng.uniform_int(num_actions);
    }
    return optimal;
}

BlockMdp assemble_comblock(int horizon, int num_actions, EmissionMode mode, int codes_per_latent,
                           double sigma, const std::vector<std::array<int, 2>>& optimal,
                           std::uint64_t seed) {
    BlockMdp env;
    env.family = "comblock";
    env.build_seed = seed;
    env.horizon = horizon;
    env.num_actions = num_actions;
    env.latents_per_layer = comblock_layers(horizon);
    env.mode = mode;
    int cpl = mode == EmissionMode::Noisy ? 1 : codes_per_latent;
    for (int h = 0; h < horizon; ++h)
        env.transitions.push_back(comblock_transition(env.latents_at(h), num_actions, optimal[h][0],
                                                      optimal[h][1]));
    for (int layer = 0; layer <= horizon; ++layer) {
        int z = env.latents_at(layer);
        env.emissions.push_back(uniform_group_emission(z, cpl));
        std::vector<int> owners(z * cpl);
        for (int c = 0; c < z * cpl; ++c) owners[c] = c / cpl;
        env.code_latent.push_back(std::move(owners));
    }
    env.reward = comblock_reward(horizon, num_actions, optimal);
    env.initial = Eigen::VectorXd::Constant(2, 0.5);
    if (mode == EmissionMode::Noisy) attach_noisy_emission(env, sigma);
    env.validate();
    return env;
}

}  // namespace

BlockMdp build_comblock(const ComblockOptions& options, Rng& rng) {
    if (options.horizon < 1 || options.num_actions < 2)
        throw std::invalid_argument("comblock needs horizon >= 1 and at least 2 actions");
    std::uint64_t seed = rng.next_u64();
    Rng local(seed);
    auto optimal = random_optimal_actions(options.horizon, options.num_actions, local);
    return assemble_comblock(options.horizon, options.num_actions, options.mode,
                             options.codes_per_latent, options.sigma, optimal, seed);
}

BlockMdp build_comblock(int horizon, int num_actions, EmissionMode mode, Rng& rng) {
    ComblockOptions options;
    options.horizon = horizon;
    options.num_actions = num_actions;
    options.mode = mode;
    return build_comblock(options, rng);
}

double SpanCoefficients::alpha_bar() const {
    double best = 0.0;
    for (const auto& a : alpha) {
        double sum = 0.0;
        for (int k = 0; k < a.rows(); ++k) sum += a.row(k).cwiseAbs().maxCoeff();
        best = std::max(best, sum);
    }
    return best;
}

double SpanCoefficients::alpha_max() const {
    double best = 0.0;
    for (const auto& a : alpha) best = std::max(best, a.cwiseAbs().maxCoeff());
    return best;
}

double span_identity_error(const TransferSuite& suite) {
    if (!suite.span.present) throw std::invalid_argument("suite has no recorded span coefficients");
    double worst = 0.0;
    int K = suite.num_sources();
    for (int h = 0; h < suite.target.horizon; ++h) {
        // observation kernels (Z_h*A) x C_{h+1}
        Eigen::MatrixXd target = suite.target.transitions[h] * suite.target.emissions[h + 1];
        Eigen::MatrixXd combo = Eigen::MatrixXd::Zero(target.rows(), target.cols());
        for (int k = 0; k < K; ++k) {
            Eigen::MatrixXd kernel = suite.sources[k].transitions[h] * suite.sources[k].emissions[h + 1];
            combo += kernel * suite.span.alpha[h].row(k).asDiagonal();
        }
        worst = std::max(worst, (target - combo).cwiseAbs().maxCoeff());
    }
    return worst;
}

nlohmann::json TransferSuite::manifest() const {
    nlohmann::json j;
    j["format_version"] = 1;
    nlohmann::json srcs = nlohmann::json::array();
    for (const auto& s : sources) srcs.push_back(s.to_json());
    j["sources"] = std::move(srcs);
    j["target"] = target.to_json();
    if (span.present) {
        nlohmann::json alphas = nlohmann::json::array();
        for (const auto& a : span.alpha) {
            nlohmann::json rows = nlohmann::json::array();
            for (int r = 0; r < a.rows(); ++r) {
                nlohmann::json row = nlohmann::json::array();
                for (int c = 0; c < a.cols(); ++c) row.push_back(a(r, c));
                rows.push_back(std::move(row));
            }
            alphas.push_back(std::move(rows));
        }
        j["span_coefficients"] = std::move(alphas);
        j["alpha_bar"] = alpha_bar();
        j["alpha_max"] = alpha_max();
    }
    return j;
}

TransferSuite build_shared_emission_suite(int num_sources, int horizon, Rng& rng, int num_actions,
                                          int codes_per_latent, EmissionMode mode, double sigma) {
    if (num_sources < 2) throw std::invalid_argument("need at least 2 sources");
    TransferSuite suite;
    std::uint64_t seed = rng.next_u64();
    Rng local(seed);
    std::vector<std::vector<std::array<int, 2>>> optimal(num_sources);
    for (int k = 0; k < num_sources; ++k) {
        optimal[k] = random_optimal_actions(horizon, num_actions, local);
        suite.sources.push_back(assemble_comblock(horizon, num_actions, mode, codes_per_latent,
                                                  sigma, optimal[k], seed + 1 + k));
        suite.sources.back().family = "shared_emission_source";
    }
    // Target copies each step's dynamics from a uniformly chosen source; keep
    // sampling until the chosen source's two good-state actions differ.
    std::vector<std::array<int, 2>> target_optimal(horizon);
    suite.span.present = true;
    suite.span.alpha.resize(horizon);
    for (int h = 0; h < horizon; ++h) {
        int pick = -1;
        for (int attempt = 0; attempt < 64 && pick < 0; ++attempt) {
            int k = local.uniform_int(num_sources);
            if (optimal[k][h][0] != optimal[k][h][1]) pick = k;
        }
        if (pick < 0) {
            for (int k = 0; k < num_sources && pick < 0; ++k)
                if (optimal[k][h][0] != optimal[k][h][1]) pick = k;
        }
        if (pick < 0) pick = local.uniform_int(num_sources);  // all sources degenerate at h
        target_optimal[h] = optimal[pick][h];
        int codes_next = suite.sources[0].codes_at(h + 1);
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(num_sources, codes_next);
        a.row(pick).setOnes();
        suite.span.alpha[h] = std::move(a);
    }
    suite.target = assemble_comblock(horizon, num_actions, mode, codes_per_latent, sigma,
                                     target_optimal, seed);
    suite.target.family = "shared_emission_target";
    suite.layout = CodebookLayout::from_env(suite.target);
    return suite;
}

TransferSuite build_partitioned_suite(int num_sources, int horizon, Rng& rng, int num_actions,
                                      int codes_per_latent) {
    if (num_sources < 2) throw std::invalid_argument("need at least 2 sources");
    TransferSuite suite;
    std::uint64_t seed = rng.next_u64();
    Rng local(seed);
    auto optimal = random_optimal_actions(horizon, num_actions, local);
    int K = num_sources;
    int cpl = codes_per_latent;

    // Union codebook: K blocks per layer, each with one codeword group per
    // latent. Non-primary blocks carry the two good groups with the swapped
    // latent association; group order within a block is canonical, so online
    // data cannot reveal the association.
    auto layout = std::make_shared<CodebookLayout>();
    layout->horizon = horizon;
    std::vector<std::vector<int>> true_owner(horizon + 1);
    for (int layer = 0; layer <= horizon; ++layer) {
        int z = layer == 0 ? 2 : 3;
        int groups = K * z;
        layout->codes_per_layer.push_back(groups * cpl);
        layout->groups_per_layer.push_back(groups);
        layout->canonical_labels_per_layer.push_back(z);
        std::vector<int> code_group(groups * cpl);
        std::vector<int> canonical(groups);
        for (int g = 0; g < groups; ++g) {
            canonical[g] = g % z;
            for (int c = 0; c < cpl; ++c) code_group[g * cpl + c] = g;
        }
        layout->code_group.push_back(std::move(code_group));
        layout->group_canonical_label.push_back(std::move(canonical));
        true_owner[layer].resize(groups * cpl);
        for (int b = 0; b < K; ++b) {
            for (int g = 0; g < z; ++g) {
                int latent = g;
                if (b > 0 && g < 2) latent = 1 - g;  // swapped association off the primary block
                for (int c = 0; c < cpl; ++c) true_owner[layer][(b * z + g) * cpl + c] = latent;
            }
        }
    }

    auto make_env = [&](int block_or_target) {
        BlockMdp env;
        env.horizon = horizon;
        env.num_actions = num_actions;
        env.latents_per_layer = comblock_layers(horizon);
        env.mode = EmissionMode::Decodable;
        env.build_seed = seed + 1 + block_or_target;
        for (int h = 0; h < horizon; ++h)
            env.transitions.push_back(
                comblock_transition(env.latents_at(h), num_actions, optimal[h][0], optimal[h][1]));
        env.reward = comblock_reward(horizon, num_actions, optimal);
        env.initial = Eigen::VectorXd::Constant(2, 0.5);
        env.code_latent = true_owner;
        for (int layer = 0; layer <= horizon; ++layer) {
            int z = env.latents_at(layer);
            int codes = layout->codes_per_layer[layer];
            env.emissions.push_back(Eigen::MatrixXd::Zero(z, codes));
        }
        return env;
    };

    for (int k = 0; k < K; ++k) {
        BlockMdp env = make_env(k);
        env.family = "partitioned_source";
        for (int layer = 0; layer <= horizon; ++layer) {
            int z = env.latents_at(layer);
            for (int code = 0; code < layout->codes_per_layer[layer]; ++code) {
                int block = layout->code_group[layer][code] / z;
                if (block == k) env.emissions[layer](true_owner[layer][code], code) = 1.0 / cpl;
            }
        }
        env.validate();
        suite.sources.push_back(std::move(env));
    }

    BlockMdp target = make_env(K);
    target.family = "partitioned_target";
    // Per latent and layer, emit from one uniformly chosen source's block.
    std::vector<std::vector<int>> chosen(horizon + 1);
    for (int layer = 0; layer <= horizon; ++layer) {
        int z = target.latents_at(layer);
        chosen[layer].resize(z);
        for (int latent = 0; latent < z; ++latent) {
            int pick = local.uniform_int(K);
            chosen[layer][latent] = pick;
            target.emissions[layer].row(latent) = suite.sources[pick].emissions[layer].row(latent);
        }
    }
    target.validate();
    suite.target = std::move(target);

    suite.span.present = true;
    suite.span.alpha.resize(horizon);
    for (int h = 0; h < horizon; ++h) {
        int layer = h + 1;
        int z = suite.target.latents_at(layer);
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(K, layout->codes_per_layer[layer]);
        for (int code = 0; code < a.cols(); ++code) {
            int block = layout->code_group[layer][code] / z;
            int latent = true_owner[layer][code];
            if (chosen[layer][latent] == block) a(block, code) = 1.0;
        }
        suite.span.alpha[h] = std::move(a);
    }
    suite.layout = layout;
    return suite;
}

TransferSuite build_mixture_target(const std::vector<BlockMdp>& sources,
                                   const std::vector<double>& weights) {
    if (sources.empty() || sources.size() != weights.size())
        throw std::invalid_argument("mixture needs one weight per source");
    double sum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw std::invalid_argument("mixture weights must be non-negative");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("mixture weights must sum to 1");
    for (const auto& s : sources) {
        if (s.horizon != sources[0].horizon || s.code_latent != sources[0].code_latent)
            throw std::invalid_argument("mixture sources must share horizon and emission layout");
    }
    TransferSuite suite;
    suite.sources = sources;
    suite.target = sources[0];
    suite.target.family = "mixture_target";
    for (int h = 0; h < suite.target.horizon; ++h) {
        Eigen::MatrixXd t = Eigen::MatrixXd::Zero(sources[0].transitions[h].rows(),
                                                  sources[0].transitions[h].cols());
        for (size_t k = 0; k < sources.size(); ++k) t += weights[k] * sources[k].transitions[h];
        suite.target.transitions[h] = t;
    }
    suite.target.validate();
    suite.span.present = true;
    suite.span.alpha.resize(suite.target.horizon);
    for (int h = 0; h < suite.target.horizon; ++h) {
        Eigen::MatrixXd a(sources.size(), suite.target.codes_at(h + 1));
        for (size_t k = 0; k < sources.size(); ++k) a.row(static_cast<int>(k)).setConstant(weights[k]);
        suite.span.alpha[h] = std::move(a);
    }
    suite.layout = CodebookLayout::from_env(suite.target);
    return suite;
}

LowerBoundFamily build_lower_bound_family() {
    // H=2. Layer 0: two latents observed through R/B blocks; layer 1: the
    // rewarding/non-rewarding pair; layer 2: a single sink.
    LowerBoundFamily family;
    auto layout = std::make_shared<CodebookLayout>();
    layout->horizon = 2;
    layout->codes_per_layer = {4, 2, 1};
    layout->groups_per_layer = {4, 2, 1};
    layout->canonical_labels_per_layer = {2, 2, 1};
    layout->code_group = {{0, 1, 2, 3}, {0, 1}, {0}};
    layout->group_canonical_label = {{0, 1, 0, 1}, {0, 1}, {0}};

    auto make_env = [&](int which) {  // 0: R-task, 1: B-task, 2: target
        BlockMdp env;
        env.horizon = 2;
        env.num_actions = 2;
        env.latents_per_layer = {2, 2, 1};
        env.mode = EmissionMode::Decodable;
        env.build_seed = which;
        Eigen::MatrixXd t0 = Eigen::MatrixXd::Zero(4, 2);
        t0(0, 0) = 1.0;  // (z0, a0) -> rewarding
        t0(1, 1) = 1.0;  // (z0, a1) -> other
        t0(2, 1) = 1.0;  // (z1, a0) -> other
        t0(3, 0) = 1.0;  // (z1, a1) -> rewarding
        env.transitions.push_back(t0);
        Eigen::MatrixXd t1 = Eigen::MatrixXd::Ones(4, 1);
        env.transitions.push_back(t1);
        Eigen::MatrixXd em0 = Eigen::MatrixXd::Zero(2, 4);
        if (which == 0) {
            em0(0, 0) = 1.0;  // R1
            em0(1, 1) = 1.0;  // R2
        } else if (which == 1) {
            em0(0, 2) = 1.0;  // B1
            em0(1, 3) = 1.0;  // B2
        } else {
            em0(0, 0) = 0.5;
            em0(0, 2) = 0.5;
            em0(1, 1) = 0.5;
            em0(1, 3) = 0.5;
        }
        env.emissions.push_back(em0);
        Eigen::MatrixXd em1 = Eigen::MatrixXd::Identity(2, 2);
        env.emissions.push_back(em1);
        env.emissions.push_back(Eigen::MatrixXd::Ones(1, 1));
        env.code_latent = {{0, 1, 0, 1}, {0, 1}, {0}};
        env.reward.step.resize(2);
        env.reward.step[0].assign(2, std::vector<RewardEntry>(2, RewardEntry{0.0, 1.0}));
        env.reward.step[1].assign(2, std::vector<RewardEntry>(2, RewardEntry{0.0, 1.0}));
        env.reward.step[1][0][0] = RewardEntry{1.0, 1.0};
        env.reward.step[1][0][1] = RewardEntry{1.0, 1.0};
        env.reward.terminal.assign(1, RewardEntry{0.0, 1.0});
        env.initial = Eigen::VectorXd::Constant(2, 0.5);
        env.validate();
        return env;
    };

    family.suite.sources.push_back(make_env(0));
    family.suite.sources.back().family = "lower_bound_source_r";
    family.suite.sources.push_back(make_env(1));
    family.suite.sources.back().family = "lower_bound_source_b";
    family.suite.target = make_env(2);
    family.suite.target.family = "lower_bound_target";
    family.suite.layout = layout;

    family.suite.span.present = true;
    family.suite.span.alpha.resize(2);
    family.suite.span.alpha[0] = Eigen::MatrixXd::Constant(2, 2, 0.5);
    family.suite.span.alpha[1] = Eigen::MatrixXd::Constant(2, 1, 0.5);

    family.psi1.layout = layout;
    family.psi1.relabel = {{0, 1, 0, 1}, {0, 1}, {0}};
    family.psi1.labels_per_layer = {2, 2, 1};
    family.psi1.name = "psi1";
    family.psi2.layout = layout;
    family.psi2.relabel = {{0, 1, 1, 0}, {0, 1}, {0}};
    family.psi2.labels_per_layer = {2, 2, 1};
    family.psi2.name = "psi2";
    return family;
}

HypothesisClass LowerBoundFamily::hypothesis_class() const {
    HypothesisClass cls;
    cls.layout = suite.layout;
    cls.num_actions = 2;
    cls.candidates = {psi1, psi2};
    cls.realizability = true;
    return cls;
}

}  // namespace reptransfer
