#include "reptransfer/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace reptransfer {

int CodebookLayout::code_of(int layer, const Observation& s) const {
    if (!codeword_vectors.empty() && codeword_vectors[layer].size() > 0 && s.vec.size() > 0) {
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
        return best;
    }
    if (s.code < 0 || s.code >= static_cast<int>(code_group[layer].size()))
        throw UnknownObservation("code " + std::to_string(s.code) + " outside layer " +
                                 std::to_string(layer) + " codebook");
    return s.code;
}

int CodebookLayout::group_of(int layer, const Observation& s) const {
    return code_group[layer][code_of(layer, s)];
}

std::shared_ptr<const CodebookLayout> CodebookLayout::from_env(const BlockMdp& env) {
    auto layout = std::make_shared<CodebookLayout>();
    layout->horizon = env.horizon;
    for (int layer = 0; layer <= env.horizon; ++layer) {
        layout->codes_per_layer.push_back(env.codes_at(layer));
        layout->code_group.push_back(env.code_latent[layer]);
        int groups = env.latents_at(layer);
        layout->groups_per_layer.push_back(groups);
        std::vector<int> canonical(groups);
        for (int g = 0; g < groups; ++g) canonical[g] = g;
        layout->group_canonical_label.push_back(std::move(canonical));
        layout->canonical_labels_per_layer.push_back(groups);
    }
    if (env.mode == EmissionMode::Noisy) {
        layout->codeword_vectors = env.codeword_vectors;
        layout->mixing = env.mixing;
    }
    return layout;
}

std::string TransitionDataset::to_csv(const CodebookLayout* layout) const {
    std::string out = "task_i,task_j,mode,h,s,a,next\n";
    std::string head = std::to_string(task_i) + "," + std::to_string(task_j) + "," +
                       (mode == Mode::Cross ? "cross" : "on-policy") + ",";
    for (int h = 0; h < horizon(); ++h) {
        for (const auto& t : per_h[h]) {
            int s_code = layout ? layout->code_of(h, t.s) : t.s.code;
            int next_code = layout ? layout->code_of(h + 1, t.next) : t.next.code;
            out += head + std::to_string(h) + "," + std::to_string(s_code) + "," +
                   std::to_string(t.a) + "," + std::to_string(next_code) + "\n";
        }
    }
    return out;
}

TransitionDataset TransitionDataset::from_csv(const std::string& text) {
    TransitionDataset d;
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(row, field, ',')) fields.push_back(field);
        if (fields.size() != 7) throw std::invalid_argument("malformed dataset row: " + line);
        d.task_i = std::stoi(fields[0]);
        d.task_j = std::stoi(fields[1]);
        d.mode = fields[2] == "cross" ? Mode::Cross : Mode::OnPolicy;
        int h = std::stoi(fields[3]);
        if (h >= static_cast<int>(d.per_h.size())) d.per_h.resize(h + 1);
        Tuple t;
        t.s.code = std::stoi(fields[4]);
        t.a = std::stoi(fields[5]);
        t.next.code = std::stoi(fields[6]);
        d.per_h[h].push_back(std::move(t));
    }
    return d;
}

nlohmann::json DecoderCandidate::to_json() const {
    nlohmann::json j;
    j["name"] = name;
    j["relabel"] = relabel;
    j["labels_per_layer"] = labels_per_layer;
    return j;
}

FeatureMap FeatureMap::from_decoder(DecoderCandidate decoder, int num_actions) {
    FeatureMap f;
    f.decoder_ = std::move(decoder);
    f.num_actions_ = num_actions;
    return f;
}

FeatureMap FeatureMap::ground_truth(const BlockMdp& env) {
    FeatureMap f;
    f.truth_env_ = &env;
    f.num_actions_ = env.num_actions;
    return f;
}

int FeatureMap::labels(int h) const {
    if (truth_env_) return truth_env_->latents_at(h);
    return decoder_.labels_per_layer[h];
}

int FeatureMap::max_dim(int horizon) const {
    int best = 0;
    for (int h = 0; h < horizon; ++h) best = std::max(best, dim(h));
    return best;
}

int FeatureMap::decode_label(int h, const Observation& s) const {
    if (truth_env_) return truth_env_->decode(h, s);
    return decoder_.decode(h, s);
}

Eigen::VectorXd FeatureMap::phi(int h, const Observation& s, int a) const {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(dim(h));
    v[phi_index(h, s, a)] = 1.0;
    return v;
}

nlohmann::json FeatureMap::to_json() const {
    nlohmann::json j;
    j["num_actions"] = num_actions_;
    if (truth_env_) {
        j["kind"] = "ground_truth";
    } else {
        j["kind"] = "decoder";
        j["decoder"] = decoder_.to_json();
    }
    return j;
}

namespace {

DecoderCandidate canonical_candidate(std::shared_ptr<const CodebookLayout> layout) {
    DecoderCandidate d;
    d.layout = layout;
    d.relabel = layout->group_canonical_label;
    d.labels_per_layer = layout->canonical_labels_per_layer;
    d.name = "canonical";
    return d;
}

}  // namespace

HypothesisClass make_decoder_class(std::shared_ptr<const CodebookLayout> layout, int num_actions,
                                   const ClassOptions& options) {
    HypothesisClass cls;
    cls.layout = layout;
    cls.num_actions = num_actions;
    cls.realizability = true;
    cls.candidates.push_back(canonical_candidate(layout));
    int layers = layout->horizon + 1;

    if (options.block_masks) {
        // One bit per (layer, non-primary block): swap that block's two good
        // labels. The all-zero mask is the canonical candidate above.
        std::vector<std::pair<int, int>> bits;  // (layer, block)
        for (int layer = 0; layer < layers; ++layer) {
            int z = layout->canonical_labels_per_layer[layer];
            int blocks = layout->groups_per_layer[layer] / z;
            for (int b = 1; b < blocks; ++b) bits.emplace_back(layer, b);
        }
        size_t count = size_t{1} << bits.size();
        if (count > options.max_candidates)
            throw std::invalid_argument("block mask class too large to enumerate");
        for (size_t mask = 1; mask < count; ++mask) {
            DecoderCandidate d = canonical_candidate(layout);
            std::string name = "mask";
            for (size_t bit = 0; bit < bits.size(); ++bit) {
                if (!(mask >> bit & 1)) continue;
                auto [layer, block] = bits[bit];
                int z = layout->canonical_labels_per_layer[layer];
                for (int g = 0; g < layout->groups_per_layer[layer]; ++g) {
                    if (g / z != block) continue;
                    int label = layout->group_canonical_label[layer][g];
                    if (label < 2) d.relabel[layer][g] = 1 - label;
                }
                name += "_" + std::to_string(layer) + "b" + std::to_string(block);
            }
            d.name = name;
            cls.candidates.push_back(std::move(d));
        }
    }

    if (options.gauge_swaps) {
        for (int layer = 0; layer < layers; ++layer) {
            if (layout->canonical_labels_per_layer[layer] < 2) continue;
            DecoderCandidate d = canonical_candidate(layout);
            for (int g = 0; g < layout->groups_per_layer[layer]; ++g) {
                int label = layout->group_canonical_label[layer][g];
                if (label < 2) d.relabel[layer][g] = 1 - label;
            }
            d.name = "swap@" + std::to_string(layer);
            cls.candidates.push_back(std::move(d));
        }
    }

    if (options.merge_decoys) {
        for (int layer = 0; layer + 1 < layers; ++layer) {
            int z = layout->canonical_labels_per_layer[layer];
            if (z < 2) continue;
            DecoderCandidate d = canonical_candidate(layout);
            for (int g = 0; g < layout->groups_per_layer[layer]; ++g) {
                int label = layout->group_canonical_label[layer][g];
                d.relabel[layer][g] = label < 2 ? 0 : label - 1;
            }
            d.labels_per_layer[layer] = z - 1;
            d.name = "merge@" + std::to_string(layer);
            cls.candidates.push_back(std::move(d));
        }
    }

    if (cls.candidates.size() > options.max_candidates)
        throw std::invalid_argument("hypothesis class too large");
    return cls;
}

// --- learned model ---------------------------------------------------------------

Eigen::VectorXd LinearMdpModel::kernel(int h, const Observation& s, int a) const {
    int label = phi.decode_label(h, s);
    return (trans[h].row(label * phi.num_actions() + a) * emit[h + 1]).transpose();
}

nlohmann::json LinearMdpModel::to_json() const {
    nlohmann::json j;
    j["phi"] = phi.to_json();
    auto mat = [](const Eigen::MatrixXd& m) {
        nlohmann::json rows = nlohmann::json::array();
        for (int r = 0; r < m.rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
            rows.push_back(std::move(row));
        }
        return rows;
    };
    nlohmann::json tc = nlohmann::json::array();
    for (const auto& t : trans_counts) tc.push_back(mat(t));
    j["transition_counts"] = std::move(tc);
    nlohmann::json ec = nlohmann::json::array();
    for (const auto& e : emit_counts) ec.push_back(mat(e));
    j["emission_counts"] = std::move(ec);
    j["support"] = support ? support->codes : std::vector<std::vector<int>>{};
    j["initial_codes"] = initial_codes;
    j["initial_probs"] = initial_probs;
    return j;
}

namespace {

Eigen::MatrixXd smooth_rows(const Eigen::MatrixXd& counts) {
    Eigen::MatrixXd p = counts.array() + kLaplaceSmoothing;
    for (int r = 0; r < p.rows(); ++r) p.row(r) /= p.row(r).sum();
    return p;
}

}  // namespace

LinearMdpModel exact_model(const BlockMdp& env, const DecoderCandidate& decoder) {
    if (env.mode != EmissionMode::Decodable)
        throw std::invalid_argument("exact models require decodable mode");
    for (int layer = 0; layer <= env.horizon; ++layer)
        if (decoder.labels_per_layer[layer] != env.latents_at(layer))
            throw DimensionMismatch("exact models need a label-preserving decoder");
    LinearMdpModel model;
    model.phi = FeatureMap::from_decoder(decoder, env.num_actions);
    model.trans = env.transitions;
    model.trans_counts = env.transitions;
    model.emit = env.emissions;
    model.emit_counts = env.emissions;
    model.support = SupportIndex::full(env);
    Eigen::VectorXd init = env.initial_observation_distribution();
    for (int c = 0; c < init.size(); ++c) {
        if (init[c] > 0.0) {
            model.initial_codes.push_back(c);
            model.initial_probs.push_back(init[c]);
        }
    }
    return model;
}

LinearMdpModel exact_model(const BlockMdp& env) {
    auto layout = CodebookLayout::from_env(env);
    DecoderCandidate canonical;
    canonical.layout = layout;
    canonical.relabel = layout->group_canonical_label;
    canonical.labels_per_layer = layout->canonical_labels_per_layer;
    canonical.name = "canonical";
    return exact_model(env, canonical);
}

LinearMdpModel fit_count_model(const std::vector<const TransitionDataset*>& data, int task,
                               const DecoderCandidate& decoder, int num_actions,
                               const std::vector<int>* extra_layer0) {
    if (data.empty()) throw EmptyDataset("no datasets supplied");
    int H = data.front()->horizon();
    const auto& layout = *decoder.layout;

    LinearMdpModel model;
    model.phi = FeatureMap::from_decoder(decoder, num_actions);

    // Support: layer 0 from s-role codes at h=0, layers >= 1 from next-role
    // codes, both through the learner-side code identity (nearest codeword in
    // noisy mode).
    std::vector<std::vector<int>> support_codes(H + 1);
    if (extra_layer0) support_codes[0] = *extra_layer0;
    for (const auto* d : data) {
        if (d->task_i != task) continue;
        for (int h = 0; h < H; ++h) {
            for (const auto& t : d->per_h[h]) {
                if (h == 0) support_codes[0].push_back(layout.code_of(0, t.s));
                support_codes[h + 1].push_back(layout.code_of(h + 1, t.next));
            }
        }
    }
    model.support = SupportIndex::from_codes(std::move(support_codes), layout.codes_per_layer);

    model.trans_counts.resize(H);
    model.emit_counts.resize(H + 1);
    for (int h = 0; h < H; ++h)
        model.trans_counts[h] = Eigen::MatrixXd::Zero(decoder.labels_per_layer[h] * num_actions,
                                                      decoder.labels_per_layer[h + 1]);
    for (int layer = 1; layer <= H; ++layer)
        model.emit_counts[layer] = Eigen::MatrixXd::Zero(
            decoder.labels_per_layer[layer], static_cast<int>(model.support->codes[layer].size()));
    model.emit_counts[0] = Eigen::MatrixXd::Zero(decoder.labels_per_layer[0],
                                                 static_cast<int>(model.support->codes[0].size()));

    for (const auto* d : data) {
        if (d->task_i != task) continue;
        for (int h = 0; h < H; ++h) {
            for (const auto& t : d->per_h[h]) {
                int ls = decoder.decode(h, t.s);
                int ln = decoder.decode(h + 1, t.next);
                model.trans_counts[h](ls * num_actions + t.a, ln) += 1.0;
                int col = model.support->pos(h + 1, layout.code_of(h + 1, t.next));
                model.emit_counts[h + 1](ln, col) += 1.0;
            }
        }
    }

    model.trans.resize(H);
    model.emit.resize(H + 1);
    for (int h = 0; h < H; ++h) model.trans[h] = smooth_rows(model.trans_counts[h]);
    for (int layer = 0; layer <= H; ++layer) {
        if (model.emit_counts[layer].cols() == 0) {
            model.emit[layer] = Eigen::MatrixXd::Zero(decoder.labels_per_layer[layer], 0);
        } else {
            model.emit[layer] = smooth_rows(model.emit_counts[layer]);
        }
    }
    return model;
}

namespace {

void validate_datasets(const std::vector<const TransitionDataset*>& data, int num_tasks) {
    if (data.empty()) throw EmptyDataset("no datasets supplied");
    for (const auto* d : data) {
        if (d->task_i < 0 || d->task_i >= num_tasks || d->task_j < 0 || d->task_j >= num_tasks)
            throw MismatchedTasks("dataset task index outside [0, K)");
        for (int h = 0; h < d->horizon(); ++h)
            if (d->per_h[h].empty())
                throw EmptyDataset("dataset (" + std::to_string(d->task_i) + "," +
                                   std::to_string(d->task_j) + ") empty at h=" + std::to_string(h));
    }
}

double loglik_of(const std::vector<const TransitionDataset*>& data,
                 const std::vector<LinearMdpModel>& models, int num_actions) {
    double ll = 0.0;
    for (const auto* d : data) {
        const LinearMdpModel& m = models[d->task_i];
        const auto& decoder = m.phi;
        for (int h = 0; h < d->horizon(); ++h) {
            for (const auto& t : d->per_h[h]) {
                int ls = decoder.decode_label(h, t.s);
                int code = m.phi.decoder().layout->code_of(h + 1, t.next);
                int col = m.support->pos(h + 1, code);
                double p = m.trans[h].row(ls * num_actions + t.a).dot(m.emit[h + 1].col(col));
                if (!(p > 0.0)) return -std::numeric_limits<double>::infinity();
                ll += std::log(p);
            }
        }
    }
    return ll;
}

MultiMleResult run_mle(const std::vector<const TransitionDataset*>& data,
                       const HypothesisClass& cls, int num_tasks) {
    validate_datasets(data, num_tasks);
    MultiMleResult result;
    result.loglik.assign(cls.candidates.size(), 0.0);
    double best = -std::numeric_limits<double>::infinity();
    int best_idx = -1;
    std::vector<LinearMdpModel> best_models;
    for (size_t i = 0; i < cls.candidates.size(); ++i) {
        std::vector<LinearMdpModel> models;
        models.reserve(num_tasks);
        for (int k = 0; k < num_tasks; ++k)
            models.push_back(fit_count_model(data, k, cls.candidates[i], cls.num_actions));
        double ll = loglik_of(data, models, cls.num_actions);
        result.loglik[i] = ll;
        bool take = best_idx < 0 && std::isfinite(ll);
        if (!take && best_idx >= 0) take = ll > best + 1e-9 * std::max(1.0, std::abs(best));
        if (take) {
            best = ll;
            best_idx = static_cast<int>(i);
            best_models = std::move(models);
        }
    }
    if (best_idx < 0) throw LikelihoodDegenerate("all candidates assign zero likelihood");
    double tol = 1e-9 * std::max(1.0, std::abs(best));
    for (size_t i = 0; i < result.loglik.size(); ++i)
        if (result.loglik[i] >= best - tol) result.ties.push_back(static_cast<int>(i));
    result.selected = best_idx;
    result.phi = FeatureMap::from_decoder(cls.candidates[best_idx], cls.num_actions);
    result.models = std::move(best_models);
    return result;
}

}  // namespace

MleResult mle_single_task(const TransitionDataset& data, const HypothesisClass& cls) {
    std::vector<const TransitionDataset*> ptrs{&data};
    TransitionDataset normalized;
    const TransitionDataset* use = &data;
    if (data.task_i != 0 || data.task_j != 0) {
        normalized = data;
        normalized.task_i = 0;
        normalized.task_j = 0;
        use = &normalized;
        ptrs[0] = use;
    }
    MultiMleResult multi = run_mle(ptrs, cls, 1);
    MleResult result;
    result.model = std::move(multi.models[0]);
    result.selected = multi.selected;
    result.ties = std::move(multi.ties);
    result.loglik = std::move(multi.loglik);
    return result;
}

MultiMleResult mle_multitask(const std::vector<TransitionDataset>& datasets,
                             const HypothesisClass& cls, int num_tasks) {
    std::vector<const TransitionDataset*> ptrs;
    ptrs.reserve(datasets.size());
    for (const auto& d : datasets) ptrs.push_back(&d);
    return run_mle(ptrs, cls, num_tasks);
}

double mle_bound_zeta(long n, double size_phi, double size_upsilon, int num_tasks, double delta) {
    if (n < 1) throw std::invalid_argument("n must be >= 1");
    if (delta <= 0.0 || delta >= 1.0) throw std::invalid_argument("delta must be in (0,1)");
    return (std::log(size_phi / delta) + num_tasks * std::log(size_upsilon)) / static_cast<double>(n);
}

// --- diagnostics -------------------------------------------------------------------

namespace {

Eigen::VectorXd obs_action_probs(const Policy& policy, const BlockMdp& env, int h, int code) {
    int A = env.num_actions;
    Eigen::VectorXd p = Eigen::VectorXd::Zero(A);
    switch (policy.kind()) {
        case Policy::Kind::Uniform:
            p.setConstant(1.0 / A);
            break;
        case Policy::Kind::LatentTabular: {
            Observation s;
            s.code = code;
            p = policy.latent_action_matrix(env, h).row(env.decode(h, s)).transpose();
            break;
        }
        case Policy::Kind::ObsGreedy: {
            int a = policy.table().action_at(h, code);
            if (a >= 0)
                p[a] = 1.0;
            else
                p.setConstant(1.0 / A);
            break;
        }
        case Policy::Kind::Mixture:
            throw std::logic_error("mixtures are expanded by the caller");
    }
    return p;
}

template <typename KernelFn>
std::vector<double> expected_tv(const BlockMdp& env, const Policy& policy, KernelFn&& kernel_row) {
    if (env.mode == EmissionMode::Noisy)
        throw std::invalid_argument("exact TV diagnostics are unsupported in noisy mode");
    if (policy.is_mixture()) {
        std::vector<double> out(env.horizon, 0.0);
        for (size_t i = 0; i < policy.members().size(); ++i) {
            auto member = expected_tv(env, policy.members()[i], kernel_row);
            for (int h = 0; h < env.horizon; ++h) out[h] += policy.weights()[i] * member[h];
        }
        return out;
    }
    std::vector<double> out(env.horizon, 0.0);
    for (int h = 0; h < env.horizon; ++h) {
        Eigen::VectorXd occ = latent_state_occupancy(env, policy, h);
        const Eigen::MatrixXd& em = env.emissions[h];
        for (int code = 0; code < env.codes_at(h); ++code) {
            int z = env.code_latent[h][code];
            double w_code = occ[z] * em(z, code);
            if (w_code <= 0.0) continue;
            Eigen::VectorXd action_probs = obs_action_probs(policy, env, h, code);
            Observation s;
            s.code = code;
            for (int a = 0; a < env.num_actions; ++a) {
                double w = w_code * action_probs[a];
                if (w <= 0.0) continue;
                Eigen::VectorXd truth = env.true_kernel(h, s, a);
                Eigen::VectorXd approx = kernel_row(h, s, a, env.codes_at(h + 1));
                out[h] += w * 0.5 * (truth - approx).cwiseAbs().sum();
            }
        }
    }
    return out;
}

}  // namespace

std::vector<double> model_tv_error(const LinearMdpModel& model, const BlockMdp& env,
                                   const Policy& policy) {
    return expected_tv(env, policy, [&](int h, const Observation& s, int a, int codes_next) {
        Eigen::VectorXd row = model.kernel(h, s, a);
        Eigen::VectorXd dense = Eigen::VectorXd::Zero(codes_next);
        const auto& codes = model.support->codes[h + 1];
        for (size_t i = 0; i < codes.size(); ++i) dense[codes[i]] = row[static_cast<int>(i)];
        return dense;
    });
}

TargetSpanModel target_span_model(const std::vector<LinearMdpModel>& mu_hats,
                                  const SpanCoefficients& span) {
    if (!span.present) throw std::invalid_argument("span coefficients absent");
    if (mu_hats.empty()) throw std::invalid_argument("no per-task models");
    TargetSpanModel out;
    out.phi = mu_hats[0].phi;
    int H = mu_hats[0].horizon();
    out.mu_tilde.resize(H);
    for (int h = 0; h < H; ++h) {
        int dim = out.phi.dim(h);
        int codes_next = static_cast<int>(span.alpha[h].cols());
        Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(dim, codes_next);
        for (size_t k = 0; k < mu_hats.size(); ++k) {
            Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(dim, codes_next);
            Eigen::MatrixXd local = mu_hats[k].mu(h);
            const auto& codes = mu_hats[k].support->codes[h + 1];
            for (size_t i = 0; i < codes.size(); ++i) dense.col(codes[i]) = local.col(static_cast<int>(i));
            mu += dense * span.alpha[h].row(static_cast<int>(k)).asDiagonal();
        }
        out.mu_tilde[h] = std::move(mu);
    }
    return out;
}

std::vector<double> span_model_tv_error(const TargetSpanModel& span_model, const BlockMdp& env,
                                        const Policy& policy) {
    return expected_tv(env, policy, [&](int h, const Observation& s, int a, int codes_next) {
        int idx = span_model.phi.phi_index(h, s, a);
        Eigen::VectorXd row = span_model.mu_tilde[h].row(idx).transpose();
        (void)codes_next;
        return row;
    });
}

}  // namespace reptransfer
