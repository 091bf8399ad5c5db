#include "reptransfer/mdp.hpp"

#include <algorithm>
#include <cmath>

namespace reptransfer {

namespace {
constexpr double kStochasticTol = 1e-12;
}

BlockMdp& BlockMdp::operator=(const BlockMdp& o) {
    if (this == &o) return *this;
    horizon = o.horizon;
    num_actions = o.num_actions;
    latents_per_layer = o.latents_per_layer;
    transitions = o.transitions;
    emissions = o.emissions;
    code_latent = o.code_latent;
    reward = o.reward;
    initial = o.initial;
    mode = o.mode;
    sigma = o.sigma;
    codeword_vectors = o.codeword_vectors;
    mixing = o.mixing;
    build_seed = o.build_seed;
    family = o.family;
    episodes_.store(o.episodes_.load());
    env_steps_.store(o.env_steps_.load());
    generative_.store(o.generative_.load());
    revoked_.store(o.revoked_.load());
    return *this;
}

void BlockMdp::check_access() const {
    if (revoked_.load()) throw AccessRevoked("environment access has been revoked");
}

void BlockMdp::reset_counters() const {
    episodes_.store(0);
    env_steps_.store(0);
    generative_.store(0);
}

void BlockMdp::begin_episode() const {
    check_access();
    episodes_.fetch_add(1);
}

void BlockMdp::count_step() const { env_steps_.fetch_add(1); }

int NearestCodeIndex::nearest(int layer, const Eigen::VectorXd& mixed) const {
    Eigen::VectorXd unmixed = mixing.transpose() * mixed;
    const Eigen::MatrixXd& words = codewords[layer];
    int best = 0;
    double best_d = (words.col(0) - unmixed).squaredNorm();
    for (int c = 1; c < words.cols(); ++c) {
        double d = (words.col(c) - unmixed).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

std::shared_ptr<const NearestCodeIndex> BlockMdp::nearest_index() const {
    if (mode != EmissionMode::Noisy) return nullptr;
    auto idx = std::make_shared<NearestCodeIndex>();
    idx->codewords = codeword_vectors;
    idx->mixing = mixing;
    return idx;
}

Observation BlockMdp::emit(int layer, int z, Rng& rng) const {
    const Eigen::MatrixXd& em = emissions[layer];
    std::vector<double> row(em.cols());
    for (int c = 0; c < em.cols(); ++c) row[c] = em(z, c);
    Observation s;
    s.code = rng.categorical(row);
    if (mode == EmissionMode::Noisy) {
        Eigen::VectorXd base = codeword_vectors[layer].col(s.code);
        Eigen::VectorXd noisy = base;
        for (int i = 0; i < noisy.size(); ++i) noisy[i] += rng.gaussian(sigma);
        s.vec = mixing * noisy;
    }
    return s;
}

int BlockMdp::decode(int layer, const Observation& s) const {
    if (mode == EmissionMode::Noisy && s.vec.size() > 0) {
        // Mixing is orthogonal, so nearest codeword in the unmixed space.
        Eigen::VectorXd unmixed = mixing.transpose() * s.vec;
        const Eigen::MatrixXd& words = codeword_vectors[layer];
        int best = 0;
        double best_d = (words.col(0) - unmixed).squaredNorm();
        for (int c = 1; c < words.cols(); ++c) {
            double d = (words.col(c) - unmixed).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        return code_latent[layer][best];
    }
    if (s.code < 0 || s.code >= codes_at(layer))
        throw UnknownObservation("code " + std::to_string(s.code) + " unknown at layer " +
                                 std::to_string(layer));
    return code_latent[layer][s.code];
}

double BlockMdp::known_reward(int h, const Observation& s, int a) const {
    return reward.mean(h, decode(h, s), a);
}

double BlockMdp::known_terminal_reward(const Observation& s) const {
    return reward.terminal_mean(decode(horizon, s));
}

Eigen::VectorXd BlockMdp::initial_observation_distribution() const {
    return emissions[0].transpose() * initial;
}

Observation BlockMdp::sample_initial_observation(Rng& rng) const {
    std::vector<double> d0(initial.data(), initial.data() + initial.size());
    int z = rng.categorical(d0);
    return emit(0, z, rng);
}

Observation BlockMdp::generative_initial(Rng& rng) const {
    check_access();
    generative_.fetch_add(1);
    return sample_initial_observation(rng);
}

Observation BlockMdp::generative_query(int h, const Observation& s, int a, Rng& rng) const {
    check_access();
    generative_.fetch_add(1);
    int z = decode(h, s);
    const Eigen::MatrixXd& t = transitions[h];
    std::vector<double> row(t.cols());
    for (int c = 0; c < t.cols(); ++c) row[c] = t(z * num_actions + a, c);
    int z_next = rng.categorical(row);
    return emit(h + 1, z_next, rng);
}

Eigen::VectorXd BlockMdp::true_kernel(int h, const Observation& s, int a) const {
    int z = decode(h, s);
    Eigen::VectorXd over_latents = transitions[h].row(z * num_actions + a);
    return emissions[h + 1].transpose() * over_latents;
}

void BlockMdp::validate() const {
    for (int h = 0; h < horizon; ++h) {
        const auto& t = transitions[h];
        for (int r = 0; r < t.rows(); ++r) {
            double sum = t.row(r).sum();
            if (std::abs(sum - 1.0) > kStochasticTol)
                throw std::runtime_error("transition row not stochastic at h=" + std::to_string(h));
        }
    }
    for (int layer = 0; layer <= horizon; ++layer) {
        const auto& em = emissions[layer];
        for (int z = 0; z < em.rows(); ++z) {
            double sum = em.row(z).sum();
            if (std::abs(sum - 1.0) > kStochasticTol)
                throw std::runtime_error("emission row not stochastic at layer " + std::to_string(layer));
        }
        // Block property in decodable mode: each code is emitted by one latent only.
        if (mode == EmissionMode::Decodable) {
            for (int c = 0; c < em.cols(); ++c) {
                int owner = code_latent[layer][c];
                for (int z = 0; z < em.rows(); ++z) {
                    if (z != owner && em(z, c) > 0.0)
                        throw std::runtime_error("emission supports overlap at layer " +
                                                 std::to_string(layer));
                }
            }
        }
    }
    if (std::abs(initial.sum() - 1.0) > kStochasticTol)
        throw std::runtime_error("initial distribution not normalized");
}

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
    int rows = static_cast<int>(j.size());
    int cols = rows == 0 ? 0 : static_cast<int>(j[0].size());
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
    return m;
}

}  // namespace

nlohmann::json BlockMdp::to_json() const {
    nlohmann::json j;
    j["format_version"] = 1;
    j["family"] = family;
    j["horizon"] = horizon;
    j["num_actions"] = num_actions;
    j["latents_per_layer"] = latents_per_layer;
    j["emission_mode"] = mode == EmissionMode::Decodable ? "decodable" : "noisy";
    j["sigma"] = sigma;
    j["build_seed"] = build_seed;
    nlohmann::json trans = nlohmann::json::array();
    for (const auto& t : transitions) trans.push_back(matrix_to_json(t));
    j["transitions"] = std::move(trans);
    nlohmann::json ems = nlohmann::json::array();
    for (const auto& e : emissions) ems.push_back(matrix_to_json(e));
    j["emissions"] = std::move(ems);
    j["code_latent"] = code_latent;
    nlohmann::json rew;
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& per_h : reward.step) {
        nlohmann::json zs = nlohmann::json::array();
        for (const auto& per_z : per_h) {
            nlohmann::json as = nlohmann::json::array();
            for (const auto& e : per_z) as.push_back({{"value", e.value}, {"prob", e.prob}});
            zs.push_back(std::move(as));
        }
        steps.push_back(std::move(zs));
    }
    rew["step"] = std::move(steps);
    nlohmann::json term = nlohmann::json::array();
    for (const auto& e : reward.terminal) term.push_back({{"value", e.value}, {"prob", e.prob}});
    rew["terminal"] = std::move(term);
    j["reward"] = std::move(rew);
    nlohmann::json d0 = nlohmann::json::array();
    for (int i = 0; i < initial.size(); ++i) d0.push_back(initial[i]);
    j["initial"] = std::move(d0);
    if (mode == EmissionMode::Noisy) {
        nlohmann::json words = nlohmann::json::array();
        for (const auto& w : codeword_vectors) words.push_back(matrix_to_json(w));
        j["codeword_vectors"] = std::move(words);
        j["mixing"] = matrix_to_json(mixing);
    }
    return j;
}

BlockMdp BlockMdp::from_json(const nlohmann::json& j) {
    BlockMdp env;
    env.family = j.value("family", "");
    env.horizon = j.at("horizon").get<int>();
    env.num_actions = j.at("num_actions").get<int>();
    env.latents_per_layer = j.at("latents_per_layer").get<std::vector<int>>();
    env.mode = j.at("emission_mode").get<std::string>() == "noisy" ? EmissionMode::Noisy
                                                                   : EmissionMode::Decodable;
    env.sigma = j.at("sigma").get<double>();
    env.build_seed = j.at("build_seed").get<std::uint64_t>();
    for (const auto& t : j.at("transitions")) env.transitions.push_back(matrix_from_json(t));
    for (const auto& e : j.at("emissions")) env.emissions.push_back(matrix_from_json(e));
    env.code_latent = j.at("code_latent").get<std::vector<std::vector<int>>>();
    const auto& rew = j.at("reward");
    for (const auto& zs : rew.at("step")) {
        std::vector<std::vector<RewardEntry>> per_h;
        for (const auto& as : zs) {
            std::vector<RewardEntry> per_z;
            for (const auto& e : as)
                per_z.push_back({e.at("value").get<double>(), e.at("prob").get<double>()});
            per_h.push_back(std::move(per_z));
        }
        env.reward.step.push_back(std::move(per_h));
    }
    for (const auto& e : rew.at("terminal"))
        env.reward.terminal.push_back({e.at("value").get<double>(), e.at("prob").get<double>()});
    const auto& d0 = j.at("initial");
    env.initial.resize(d0.size());
    for (size_t i = 0; i < d0.size(); ++i) env.initial[static_cast<int>(i)] = d0[i].get<double>();
    if (env.mode == EmissionMode::Noisy) {
        for (const auto& w : j.at("codeword_vectors")) env.codeword_vectors.push_back(matrix_from_json(w));
        env.mixing = matrix_from_json(j.at("mixing"));
    }
    return env;
}

// --- ground-truth features ----------------------------------------------------

int GroundTruthFeatures::phi_index(int h, const Observation& s, int a) const {
    return env->decode(h, s) * env->num_actions + a;
}

Eigen::VectorXd GroundTruthFeatures::phi(int h, const Observation& s, int a) const {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(dim(h));
    v[phi_index(h, s, a)] = 1.0;
    return v;
}

Eigen::MatrixXd GroundTruthFeatures::mu(int h) const {
    // mu*_h(s')[(z,a)] = sum_z' T_h(z'|z,a) o_{h+1}(s'|z')
    return env->transitions[h] * env->emissions[h + 1];
}

// --- support index -------------------------------------------------------------

std::shared_ptr<const SupportIndex> SupportIndex::full(const BlockMdp& env) {
    std::vector<std::vector<int>> codes(env.horizon + 1);
    std::vector<int> sizes(env.horizon + 1);
    for (int layer = 0; layer <= env.horizon; ++layer) {
        sizes[layer] = env.codes_at(layer);
        codes[layer].resize(sizes[layer]);
        for (int c = 0; c < sizes[layer]; ++c) codes[layer][c] = c;
    }
    return from_codes(std::move(codes), sizes);
}

std::shared_ptr<const SupportIndex> SupportIndex::from_codes(std::vector<std::vector<int>> codes,
                                                             const std::vector<int>& codebook_sizes) {
    auto idx = std::make_shared<SupportIndex>();
    idx->codes = std::move(codes);
    idx->position.resize(idx->codes.size());
    for (size_t layer = 0; layer < idx->codes.size(); ++layer) {
        auto& sorted = idx->codes[layer];
        std::sort(sorted.begin(), sorted.end());
        sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
        idx->position[layer].assign(codebook_sizes[layer], -1);
        for (size_t p = 0; p < sorted.size(); ++p) idx->position[layer][sorted[p]] = static_cast<int>(p);
    }
    return idx;
}

// --- policies -------------------------------------------------------------------

Policy Policy::uniform() { return Policy{}; }

Policy Policy::latent_tabular(std::vector<Eigen::MatrixXd> probs) {
    for (const auto& m : probs)
        for (int z = 0; z < m.rows(); ++z)
            if (std::abs(m.row(z).sum() - 1.0) > 1e-9)
                throw std::invalid_argument("action distribution rows must sum to 1");
    Policy p;
    p.kind_ = Kind::LatentTabular;
    p.latent_probs_ = std::move(probs);
    return p;
}

Policy Policy::obs_greedy(ObsGreedyTable table) {
    Policy p;
    p.kind_ = Kind::ObsGreedy;
    p.table_ = std::move(table);
    return p;
}

Policy Policy::mixture(std::vector<Policy> members, std::vector<double> weights) {
    Policy p;
    p.kind_ = Kind::Mixture;
    p.members_ = std::move(members);
    p.weights_ = std::move(weights);
    double sum = 0.0;
    for (double w : p.weights_) sum += w;
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("mixture weights must sum to 1");
    return p;
}

const Policy& Policy::draw_member(Rng& rng) const {
    if (kind_ != Kind::Mixture) return *this;
    return members_[rng.categorical(weights_)];
}

int Policy::act(int h, const Observation& s, int z, int num_actions, Rng& rng) const {
    switch (kind_) {
        case Kind::Uniform:
            return rng.uniform_int(num_actions);
        case Kind::LatentTabular: {
            const auto& row = latent_probs_[h];
            std::vector<double> probs(row.cols());
            for (int a = 0; a < row.cols(); ++a) probs[a] = row(z, a);
            return rng.categorical(probs);
        }
        case Kind::ObsGreedy: {
            int a = table_.action_at_obs(h, s);
            return a >= 0 ? a : rng.uniform_int(num_actions);
        }
        case Kind::Mixture:
            // Mixtures choose a member per episode; acting directly through the
            // mixture would make it a per-step blend, which is a different object.
            throw std::logic_error("mixture policies must be resolved per episode");
    }
    return 0;
}

Eigen::MatrixXd Policy::latent_action_matrix(const BlockMdp& env, int h) const {
    int Z = env.latents_at(h);
    int A = env.num_actions;
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(Z, A);
    switch (kind_) {
        case Kind::Uniform:
            m.setConstant(1.0 / A);
            break;
        case Kind::LatentTabular:
            m = latent_probs_[h];
            break;
        case Kind::ObsGreedy: {
            const Eigen::MatrixXd& em = env.emissions[h];
            for (int z = 0; z < Z; ++z) {
                for (int c = 0; c < em.cols(); ++c) {
                    double w = em(z, c);
                    if (w <= 0.0) continue;
                    int a = table_.action_at(h, c);
                    if (a >= 0) {
                        m(z, a) += w;
                    } else {
                        for (int u = 0; u < A; ++u) m(z, u) += w / A;
                    }
                }
            }
            break;
        }
        case Kind::Mixture:
            throw std::logic_error("mixture policies have no single Markov action matrix");
    }
    return m;
}

nlohmann::json Policy::to_json() const {
    nlohmann::json j;
    switch (kind_) {
        case Kind::Uniform:
            j["kind"] = "uniform";
            break;
        case Kind::LatentTabular: {
            j["kind"] = "latent_tabular";
            nlohmann::json per_h = nlohmann::json::array();
            for (const auto& m : latent_probs_) per_h.push_back(matrix_to_json(m));
            j["probs"] = std::move(per_h);
            break;
        }
        case Kind::ObsGreedy: {
            j["kind"] = "obs_greedy";
            nlohmann::json per_h = nlohmann::json::array();
            for (size_t h = 0; h < table_.action.size(); ++h) {
                nlohmann::json layer;
                layer["codes"] = table_.support->codes[h];
                layer["action"] = std::vector<int>(table_.action[h].begin(), table_.action[h].end());
                if (h < table_.q.size() && table_.q[h].size() > 0) layer["q"] = matrix_to_json(table_.q[h]);
                per_h.push_back(std::move(layer));
            }
            j["table"] = std::move(per_h);
            break;
        }
        case Kind::Mixture: {
            j["kind"] = "mixture";
            j["weights"] = weights_;
            nlohmann::json ms = nlohmann::json::array();
            for (const auto& m : members_) ms.push_back(m.to_json());
            j["members"] = std::move(ms);
            break;
        }
    }
    return j;
}

// --- simulation -----------------------------------------------------------------

namespace {
double sample_reward(const RewardEntry& e, Rng& rng) {
    if (e.prob >= 1.0) return e.value;
    return rng.bernoulli(e.prob) ? e.value : 0.0;
}
}  // namespace

Trajectory sample_episode(const BlockMdp& env, const Policy& policy, Rng& rng) {
    env.begin_episode();
    const Policy& pi = policy.draw_member(rng);
    Trajectory traj;
    std::vector<double> d0(env.initial.data(), env.initial.data() + env.initial.size());
    int z = rng.categorical(d0);
    Observation s = env.emit(0, z, rng);
    traj.latents_.push_back(z);
    for (int h = 0; h < env.horizon; ++h) {
        int a = pi.act(h, s, z, env.num_actions, rng);
        double r = sample_reward(env.reward.step[h][z][a], rng);
        traj.steps.push_back({h, s, a, r});
        const Eigen::MatrixXd& t = env.transitions[h];
        std::vector<double> row(t.cols());
        for (int c = 0; c < t.cols(); ++c) row[c] = t(z * env.num_actions + a, c);
        z = rng.categorical(row);
        s = env.emit(h + 1, z, rng);
        traj.latents_.push_back(z);
        env.count_step();
    }
    traj.final_obs = s;
    traj.final_reward = sample_reward(env.reward.terminal[z], rng);
    traj.terminal = true;
    return traj;
}

Reward zero_reward(const BlockMdp& env) {
    Reward r;
    r.step.resize(env.horizon);
    for (int h = 0; h < env.horizon; ++h) {
        r.step[h].assign(env.latents_at(h), std::vector<RewardEntry>(env.num_actions, RewardEntry{0.0, 1.0}));
    }
    r.terminal.assign(env.latents_at(env.horizon), RewardEntry{0.0, 1.0});
    return r;
}

// --- exact dynamic programming -----------------------------------------------

std::pair<double, Policy> dp_optimal_value(const BlockMdp& env, const Reward& reward) {
    int H = env.horizon;
    Eigen::VectorXd v(env.latents_at(H));
    for (int z = 0; z < v.size(); ++z) v[z] = reward.terminal_mean(z);
    std::vector<Eigen::MatrixXd> greedy(H);
    for (int h = H - 1; h >= 0; --h) {
        int Z = env.latents_at(h);
        int A = env.num_actions;
        Eigen::VectorXd v_here(Z);
        greedy[h] = Eigen::MatrixXd::Zero(Z, A);
        for (int z = 0; z < Z; ++z) {
            double best = -1e300;
            int best_a = 0;
            for (int a = 0; a < A; ++a) {
                double q = reward.mean(h, z, a) + env.transitions[h].row(z * A + a) * v;
                if (q > best + 1e-15) {
                    best = q;
                    best_a = a;
                }
            }
            v_here[z] = best;
            greedy[h](z, best_a) = 1.0;
        }
        v = v_here;
    }
    double v_star = env.initial.dot(v);
    return {v_star, Policy::latent_tabular(std::move(greedy))};
}

std::pair<double, Policy> dp_optimal_value(const BlockMdp& env) {
    return dp_optimal_value(env, env.reward);
}

namespace {

double evaluate_markov_policy(const BlockMdp& env, const Policy& policy, const Reward& reward) {
    Eigen::VectorXd occ = env.initial;
    double total = 0.0;
    for (int h = 0; h < env.horizon; ++h) {
        Eigen::MatrixXd act = policy.latent_action_matrix(env, h);
        int Z = env.latents_at(h);
        int A = env.num_actions;
        Eigen::VectorXd next = Eigen::VectorXd::Zero(env.latents_at(h + 1));
        for (int z = 0; z < Z; ++z) {
            for (int a = 0; a < A; ++a) {
                double w = occ[z] * act(z, a);
                if (w == 0.0) continue;
                total += w * reward.mean(h, z, a);
                next += w * env.transitions[h].row(z * A + a).transpose();
            }
        }
        occ = next;
    }
    for (int z = 0; z < occ.size(); ++z) total += occ[z] * reward.terminal_mean(z);
    return total;
}

}  // namespace

double dp_policy_value(const BlockMdp& env, const Policy& policy, const Reward& reward) {
    if (policy.is_mixture()) {
        double v = 0.0;
        for (size_t i = 0; i < policy.members().size(); ++i)
            v += policy.weights()[i] * dp_policy_value(env, policy.members()[i], reward);
        return v;
    }
    return evaluate_markov_policy(env, policy, reward);
}

double dp_policy_value(const BlockMdp& env, const Policy& policy) {
    return dp_policy_value(env, policy, env.reward);
}

Eigen::VectorXd latent_state_occupancy(const BlockMdp& env, const Policy& policy, int layer) {
    if (policy.is_mixture()) {
        Eigen::VectorXd occ = Eigen::VectorXd::Zero(env.latents_at(layer));
        for (size_t i = 0; i < policy.members().size(); ++i)
            occ += policy.weights()[i] * latent_state_occupancy(env, policy.members()[i], layer);
        return occ;
    }
    Eigen::VectorXd occ = env.initial;
    for (int h = 0; h < layer; ++h) {
        Eigen::MatrixXd act = policy.latent_action_matrix(env, h);
        int Z = env.latents_at(h);
        int A = env.num_actions;
        Eigen::VectorXd next = Eigen::VectorXd::Zero(env.latents_at(h + 1));
        for (int z = 0; z < Z; ++z)
            for (int a = 0; a < A; ++a) {
                double w = occ[z] * act(z, a);
                if (w != 0.0) next += w * env.transitions[h].row(z * A + a).transpose();
            }
        occ = next;
    }
    return occ;
}

Eigen::MatrixXd latent_occupancy(const BlockMdp& env, const Policy& policy, int h, bool uniform_last) {
    if (policy.is_mixture()) {
        Eigen::MatrixXd occ = Eigen::MatrixXd::Zero(env.latents_at(h), env.num_actions);
        for (size_t i = 0; i < policy.members().size(); ++i)
            occ += policy.weights()[i] * latent_occupancy(env, policy.members()[i], h, uniform_last);
        return occ;
    }
    Eigen::VectorXd occ = latent_state_occupancy(env, policy, h);
    Eigen::MatrixXd act = uniform_last
        ? Eigen::MatrixXd::Constant(env.latents_at(h), env.num_actions, 1.0 / env.num_actions)
        : policy.latent_action_matrix(env, h);
    return occ.asDiagonal() * act;
}

double coverage_lambda_min(const BlockMdp& env, const Policy& policy, int h, bool uniform_last) {
    // One-hot phi*: the feature second-moment matrix is diagonal with the
    // (z, a) occupancies on the diagonal.
    return latent_occupancy(env, policy, h, uniform_last).minCoeff();
}

}  // namespace reptransfer
