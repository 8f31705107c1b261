#include "crosse/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "crosse/checkpoint.hpp"
#include "crosse/parallel.hpp"

namespace crosse {

// ---------------------------------------------------------------------------
// Configuration

void TrainConfig::validate() const {
    if (d < 1) throw ConfigError("d", "d must be at least 1");
    if (n < 1) throw ConfigError("n", "n (negatives per triple) must be at least 1");
    if (!(lr > 0.0)) throw ConfigError("lr", "lr must be positive");
    if (!(lambda >= 0.0)) throw ConfigError("lambda", "lambda must be non-negative");
    if (batch < 1) throw ConfigError("batch", "batch must be at least 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout", "dropout must lie in [0, 1)");
    if (!(margin >= 0.0)) throw ConfigError("margin", "margin must be non-negative");
    if (threads < 1) throw ConfigError("threads", "threads must be at least 1");
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const char* first = value.data();
    const char* last = value.data() + value.size();
    const auto res = std::from_chars(first, last, out);
    if (res.ec != std::errc{} || res.ptr != last)
        throw ConfigError(key, "invalid value '" + value + "' for key '" + key + "'");
    return out;
}

}  // namespace

void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "d") cfg.d = parse_number<std::size_t>(key, value);
    else if (key == "n") cfg.n = parse_number<std::size_t>(key, value);
    else if (key == "lr") cfg.lr = parse_number<double>(key, value);
    else if (key == "lambda") cfg.lambda = parse_number<double>(key, value);
    else if (key == "batch") cfg.batch = parse_number<std::size_t>(key, value);
    else if (key == "epochs") cfg.epochs = parse_number<std::size_t>(key, value);
    else if (key == "dropout") cfg.dropout = parse_number<double>(key, value);
    else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "margin") cfg.margin = parse_number<double>(key, value);
    else if (key == "checkpoint_every") cfg.checkpoint_every = parse_number<std::size_t>(key, value);
    else if (key == "threads") cfg.threads = parse_number<std::size_t>(key, value);
    else if (key == "mode") {
        try {
            cfg.mode = score_mode_from_string(value);
        } catch (const Error& e) {
            throw ConfigError(key, e.what());
        }
    } else {
        throw ConfigError(key, "unknown config key '" + key + "'");
    }
}

TrainConfig parse_config(std::istream& in, TrainConfig base) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(line, "line " + std::to_string(lineno) + ": expected key = value");
        set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return base;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config " + path.string());
    return parse_config(in, base);
}

std::string format_config(const TrainConfig& cfg) {
    std::ostringstream out;
    out << std::setprecision(17);
    out << "d = " << cfg.d << '\n'
        << "n = " << cfg.n << '\n'
        << "lr = " << cfg.lr << '\n'
        << "lambda = " << cfg.lambda << '\n'
        << "batch = " << cfg.batch << '\n'
        << "epochs = " << cfg.epochs << '\n'
        << "dropout = " << cfg.dropout << '\n'
        << "seed = " << cfg.seed << '\n'
        << "mode = " << to_string(cfg.mode) << '\n'
        << "margin = " << cfg.margin << '\n'
        << "checkpoint_every = " << cfg.checkpoint_every << '\n'
        << "threads = " << cfg.threads << '\n';
    return out.str();
}

// ---------------------------------------------------------------------------
// Bags and dropout

TrainingBag build_bag(const KnowledgeGraph& g, const Triple& anchor, std::size_t n, std::mt19937_64& rng) {
    TrainingBag bag;
    bag.anchor = anchor;
    const auto known = g.tails(anchor.head, anchor.relation);
    for (const auto& a : known)
        if (a.splits & mask(Split::Train)) bag.examples.push_back({a.entity, true});
    if (bag.examples.empty()) throw Error("bag anchor has no positive train tails");

    const std::size_t num_entities = g.num_entities();
    const std::size_t num_positive = bag.examples.size();
    const std::size_t available = num_entities - num_positive;
    auto linked = [&](EntityId e) { return g.contains({anchor.head, anchor.relation, e}, mask(Split::Train)); };

    if (available <= 4 * n) {
        std::vector<EntityId> pool;
        pool.reserve(available);
        for (std::size_t e = 0; e < num_entities; ++e)
            if (!linked(static_cast<EntityId>(e))) pool.push_back(static_cast<EntityId>(e));
        if (pool.size() < n) {
            bag.short_of_negatives = true;
            for (EntityId e : pool) bag.examples.push_back({e, false});
            return bag;
        }
        // Partial Fisher-Yates: first n slots become a uniform sample without replacement.
        for (std::size_t i = 0; i < n; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
            std::swap(pool[i], pool[pick(rng)]);
            bag.examples.push_back({pool[i], false});
        }
        return bag;
    }

    std::uniform_int_distribution<EntityId> uniform(0, static_cast<EntityId>(num_entities - 1));
    std::unordered_set<EntityId> chosen;
    while (chosen.size() < n) {
        const EntityId e = uniform(rng);
        if (linked(e) || !chosen.insert(e).second) continue;
        bag.examples.push_back({e, false});
    }
    return bag;
}

std::vector<DropoutMask> make_dropout_masks(std::size_t bags, std::size_t dim, double dropout,
                                            std::mt19937_64& rng) {
    std::vector<DropoutMask> masks(bags, DropoutMask(dim, 1.0));
    if (dropout <= 0.0) return masks;
    const double keep_scale = 1.0 / (1.0 - dropout);
    std::bernoulli_distribution drop(dropout);
    for (auto& m : masks)
        for (auto& x : m) x = drop(rng) ? 0.0 : keep_scale;
    return masks;
}

// ---------------------------------------------------------------------------
// Loss and gradient

namespace {

constexpr double kProbabilityFloor = 1e-12;

void build_query(const ModelParams& p, const Triple& a, ScoreMode mode, std::vector<double>& q) {
    check_ids(p, a.head, a.relation, mode);
    const std::size_t d = p.dim();
    q.resize(d);
    const auto h = p.entities.row(static_cast<std::size_t>(a.head));
    const auto r = p.relations.row(static_cast<std::size_t>(a.relation));
    switch (mode) {
        case ScoreMode::CrossE: {
            const auto c = p.interactions.row(static_cast<std::size_t>(a.relation));
            for (std::size_t k = 0; k < d; ++k) {
                const double hi = static_cast<double>(c[k]) * h[k];
                q[k] = std::tanh(hi + hi * r[k] + p.bias[k]);
            }
            break;
        }
        case ScoreMode::CrossE_S:
            for (std::size_t k = 0; k < d; ++k) q[k] = std::tanh(static_cast<double>(h[k]) + r[k] + p.bias[k]);
            break;
        case ScoreMode::TransE:
            for (std::size_t k = 0; k < d; ++k) q[k] = static_cast<double>(h[k]) + r[k];
            break;
    }
}

double distance(std::span<const double> q, std::span<const float> t, std::vector<double>* diff) {
    double s = 0.0;
    if (diff) diff->resize(q.size());
    for (std::size_t k = 0; k < q.size(); ++k) {
        const double u = q[k] - t[k];
        if (diff) (*diff)[k] = u;
        s += u * u;
    }
    return std::sqrt(s);
}

double bag_data_loss(const ModelParams& p, const TrainingBag& bag, const TrainConfig& cfg,
                     const DropoutMask* m, std::vector<double>& q) {
    build_query(p, bag.anchor, cfg.mode, q);
    double total = 0.0;
    if (cfg.mode == ScoreMode::TransE) {
        const double dp = distance(q, p.entities.row(static_cast<std::size_t>(bag.anchor.tail)), nullptr);
        for (const auto& ex : bag.examples) {
            if (ex.positive) continue;
            const double dn = distance(q, p.entities.row(static_cast<std::size_t>(ex.tail)), nullptr);
            total += std::max(0.0, cfg.margin + dp - dn);
        }
        return total;
    }
    if (m)
        for (std::size_t k = 0; k < q.size(); ++k) q[k] *= (*m)[k];
    for (const auto& ex : bag.examples) {
        const double f = std::clamp(sigmoid(dot(q, p.entities.row(static_cast<std::size_t>(ex.tail)))),
                                    kProbabilityFloor, 1.0 - kProbabilityFloor);
        total -= ex.positive ? std::log(f) : std::log(1.0 - f);
    }
    return total;
}

double squared_norm(const ModelParams& p) {
    double s = 0.0;
    auto acc = [&](std::span<const float> v) {
        for (float x : v) s += static_cast<double>(x) * x;
    };
    acc(p.entities.values());
    acc(p.relations.values());
    acc(p.interactions.values());
    acc(p.bias);
    return s;
}

double data_loss(const ModelParams& p, std::span<const TrainingBag> bags, const TrainConfig& cfg,
                 std::span<const DropoutMask> masks) {
    if (!masks.empty() && masks.size() != bags.size()) throw Error("one dropout mask per bag required");
    std::vector<double> partial(std::max<std::size_t>(1, std::min(cfg.threads, bags.size())), 0.0);
    parallel_for(bags.size(), cfg.threads, [&](std::size_t begin, std::size_t end, std::size_t w) {
        std::vector<double> q;
        double s = 0.0;
        for (std::size_t i = begin; i < end; ++i)
            s += bag_data_loss(p, bags[i], cfg, masks.empty() ? nullptr : &masks[i], q);
        partial[w] = s;
    });
    return std::accumulate(partial.begin(), partial.end(), 0.0);
}

}  // namespace

double loss(const ModelParams& p, std::span<const TrainingBag> bags, const TrainConfig& cfg,
            std::span<const DropoutMask> masks) {
    return data_loss(p, bags, cfg, masks) + cfg.lambda * squared_norm(p);
}

double loss(const ModelParams& p, std::span<const TrainingBag> bags, const TrainConfig& cfg,
            std::mt19937_64& rng, bool train_mode) {
    if (!train_mode || cfg.mode == ScoreMode::TransE) return loss(p, bags, cfg);
    const auto masks = make_dropout_masks(bags.size(), p.dim(), cfg.dropout, rng);
    return loss(p, bags, cfg, masks);
}

Gradient Gradient::zeros_like(const ModelParams& p) {
    Gradient g;
    g.dim = p.dim();
    g.entities.assign(p.entities.size(), 0.0);
    g.relations.assign(p.relations.size(), 0.0);
    g.interactions.assign(p.interactions.size(), 0.0);
    g.bias.assign(p.bias.size(), 0.0);
    g.entity_touched.assign(p.num_entities(), 0);
    g.relation_touched.assign(p.num_relations(), 0);
    return g;
}

void Gradient::clear() {
    for (std::size_t i = 0; i < entity_touched.size(); ++i) {
        if (!entity_touched[i]) continue;
        std::fill_n(entities.begin() + static_cast<std::ptrdiff_t>(i * dim), dim, 0.0);
        entity_touched[i] = 0;
    }
    for (std::size_t i = 0; i < relation_touched.size(); ++i) {
        if (!relation_touched[i]) continue;
        std::fill_n(relations.begin() + static_cast<std::ptrdiff_t>(i * dim), dim, 0.0);
        if (!interactions.empty())
            std::fill_n(interactions.begin() + static_cast<std::ptrdiff_t>(i * dim), dim, 0.0);
        relation_touched[i] = 0;
    }
    std::fill(bias.begin(), bias.end(), 0.0);
}

void Gradient::add(const Gradient& other) {
    for (std::size_t i = 0; i < other.entity_touched.size(); ++i) {
        if (!other.entity_touched[i]) continue;
        entity_touched[i] = 1;
        for (std::size_t k = 0; k < dim; ++k) entities[i * dim + k] += other.entities[i * dim + k];
    }
    for (std::size_t i = 0; i < other.relation_touched.size(); ++i) {
        if (!other.relation_touched[i]) continue;
        relation_touched[i] = 1;
        for (std::size_t k = 0; k < dim; ++k) relations[i * dim + k] += other.relations[i * dim + k];
        if (!interactions.empty())
            for (std::size_t k = 0; k < dim; ++k) interactions[i * dim + k] += other.interactions[i * dim + k];
    }
    for (std::size_t k = 0; k < bias.size(); ++k) bias[k] += other.bias[k];
}

bool Gradient::all_finite() const {
    auto finite = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    return finite(entities) && finite(relations) && finite(interactions) && finite(bias);
}

namespace {

void bag_gradient(const ModelParams& p, const TrainingBag& bag, const TrainConfig& cfg, const DropoutMask* m,
                  Gradient& out, std::vector<double>& q, std::vector<double>& dq) {
    const std::size_t d = p.dim();
    const auto h_id = static_cast<std::size_t>(bag.anchor.head);
    const auto r_id = static_cast<std::size_t>(bag.anchor.relation);
    build_query(p, bag.anchor, cfg.mode, q);
    dq.assign(d, 0.0);
    out.entity_touched[h_id] = 1;
    out.relation_touched[r_id] = 1;
    double* dh = &out.entities[h_id * d];
    double* dr = &out.relations[r_id * d];

    if (cfg.mode == ScoreMode::TransE) {
        const auto t_id = static_cast<std::size_t>(bag.anchor.tail);
        std::vector<double> up, un;
        const double dp = distance(q, p.entities.row(t_id), &up);
        out.entity_touched[t_id] = 1;
        for (const auto& ex : bag.examples) {
            if (ex.positive) continue;
            const auto e_id = static_cast<std::size_t>(ex.tail);
            const double dn = distance(q, p.entities.row(e_id), &un);
            if (cfg.margin + dp - dn <= 0.0) continue;
            out.entity_touched[e_id] = 1;
            double* dt = &out.entities[t_id * d];
            double* de = &out.entities[e_id * d];
            for (std::size_t k = 0; k < d; ++k) {
                const double gp = dp > 0.0 ? up[k] / dp : 0.0;
                const double gn = dn > 0.0 ? un[k] / dn : 0.0;
                dh[k] += gp - gn;
                dr[k] += gp - gn;
                dt[k] -= gp;
                de[k] += gn;
            }
        }
        return;
    }

    // Masked query; q keeps the unmasked tanh output for the chain rule.
    std::vector<double> qm(q);
    if (m)
        for (std::size_t k = 0; k < d; ++k) qm[k] *= (*m)[k];
    for (const auto& ex : bag.examples) {
        const auto e_id = static_cast<std::size_t>(ex.tail);
        const auto t = p.entities.row(e_id);
        // d/dz of the cross-entropy; the probability clamp only guards the logarithm.
        const double gz = sigmoid(dot(qm, t)) - (ex.positive ? 1.0 : 0.0);
        out.entity_touched[e_id] = 1;
        double* de = &out.entities[e_id * d];
        for (std::size_t k = 0; k < d; ++k) {
            dq[k] += gz * t[k];
            de[k] += gz * qm[k];
        }
    }
    const auto h = p.entities.row(h_id);
    const auto r = p.relations.row(r_id);
    for (std::size_t k = 0; k < d; ++k) {
        const double dpre = dq[k] * (m ? (*m)[k] : 1.0) * (1.0 - q[k] * q[k]);
        out.bias[k] += dpre;
        if (cfg.mode == ScoreMode::CrossE) {
            const double c = p.interactions(r_id, k);
            const double one_plus_r = 1.0 + r[k];
            dh[k] += dpre * c * one_plus_r;
            out.interactions[r_id * d + k] += dpre * h[k] * one_plus_r;
            dr[k] += dpre * c * h[k];
        } else {
            dh[k] += dpre;
            dr[k] += dpre;
        }
    }
}

}  // namespace

void accumulate_data_gradient(const ModelParams& p, std::span<const TrainingBag> bags,
                              const TrainConfig& cfg, std::span<const DropoutMask> masks, Gradient& out) {
    if (!masks.empty() && masks.size() != bags.size()) throw Error("one dropout mask per bag required");
    std::vector<double> q, dq;
    for (std::size_t i = 0; i < bags.size(); ++i)
        bag_gradient(p, bags[i], cfg, masks.empty() ? nullptr : &masks[i], out, q, dq);
}

void add_regularization(const ModelParams& p, double lambda, Regularization scope, double scale, Gradient& out) {
    if (lambda == 0.0) return;
    const double w = 2.0 * lambda * (scope == Regularization::Full ? 1.0 : scale);
    const std::size_t d = p.dim();
    const bool full = scope == Regularization::Full;
    for (std::size_t i = 0; i < p.num_entities(); ++i) {
        if (!full && !out.entity_touched[i]) continue;
        out.entity_touched[i] = 1;
        for (std::size_t k = 0; k < d; ++k) out.entities[i * d + k] += w * p.entities(i, k);
    }
    for (std::size_t i = 0; i < p.num_relations(); ++i) {
        if (!full && !out.relation_touched[i]) continue;
        out.relation_touched[i] = 1;
        for (std::size_t k = 0; k < d; ++k) {
            out.relations[i * d + k] += w * p.relations(i, k);
            if (p.has_interactions()) out.interactions[i * d + k] += w * p.interactions(i, k);
        }
    }
    for (std::size_t k = 0; k < d; ++k) out.bias[k] += w * p.bias[k];
}

Gradient grad(const ModelParams& p, std::span<const TrainingBag> bags, const TrainConfig& cfg,
              std::span<const DropoutMask> masks) {
    Gradient g = Gradient::zeros_like(p);
    accumulate_data_gradient(p, bags, cfg, masks, g);
    add_regularization(p, cfg.lambda, Regularization::Full, 1.0, g);
    return g;
}

// ---------------------------------------------------------------------------
// Adam

AdamState AdamState::zeros_like(const ModelParams& p) {
    AdamState s;
    for (auto* m : {&s.first_moment, &s.second_moment}) {
        m->entities = Matrix(p.entities.rows(), p.entities.cols());
        m->relations = Matrix(p.relations.rows(), p.relations.cols());
        m->interactions = Matrix(p.interactions.rows(), p.interactions.cols());
        m->bias.assign(p.bias.size(), 0.0f);
    }
    return s;
}

void adam_step(ModelParams& p, const Gradient& g, AdamState& state, double lr) {
    if (!g.all_finite()) throw Error("non-finite gradient; aborting epoch");
    if (g.entities.size() != p.entities.size() || g.relations.size() != p.relations.size() ||
        g.interactions.size() != p.interactions.size() || g.bias.size() != p.bias.size() ||
        state.first_moment.entities.size() != p.entities.size())
        throw Error("gradient / optimizer state shape mismatch");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correct1 = 1.0 - std::pow(kAdamBeta1, t);
    const double correct2 = 1.0 - std::pow(kAdamBeta2, t);
    auto update = [&](std::span<float> param, std::span<float> m1, std::span<float> m2,
                      const std::vector<double>& grad) {
        for (std::size_t i = 0; i < param.size(); ++i) {
            const double gi = grad[i];
            const double m = kAdamBeta1 * m1[i] + (1.0 - kAdamBeta1) * gi;
            const double v = kAdamBeta2 * m2[i] + (1.0 - kAdamBeta2) * gi * gi;
            m1[i] = static_cast<float>(m);
            m2[i] = static_cast<float>(v);
            const double m_hat = m / correct1;
            const double v_hat = v / correct2;
            param[i] = static_cast<float>(param[i] - lr * m_hat / (std::sqrt(v_hat) + kAdamEpsilon));
        }
    };
    auto& m1 = state.first_moment;
    auto& m2 = state.second_moment;
    update(p.entities.values(), m1.entities.values(), m2.entities.values(), g.entities);
    update(p.relations.values(), m1.relations.values(), m2.relations.values(), g.relations);
    update(p.interactions.values(), m1.interactions.values(), m2.interactions.values(), g.interactions);
    update(p.bias, m1.bias, m2.bias, g.bias);
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

constexpr std::uint64_t kLossStream = 0x10557EA3ULL;

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
    return std::mt19937_64(seq);
}

}  // namespace

double epoch_loss(const ModelParams& p, const KnowledgeGraph& g, const TrainConfig& cfg) {
    const auto& anchors = g.triples(Split::Train);
    auto rng = stream(cfg.seed, kLossStream);
    double total = 0.0;
    std::vector<TrainingBag> bags;
    for (std::size_t start = 0; start < anchors.size(); start += cfg.batch) {
        const std::size_t end = std::min(anchors.size(), start + cfg.batch);
        bags.clear();
        for (std::size_t i = start; i < end; ++i) bags.push_back(build_bag(g, anchors[i], cfg.n, rng));
        total += data_loss(p, bags, cfg, {});
    }
    return total + cfg.lambda * squared_norm(p);
}

TrainingState train(const KnowledgeGraph& g, const TrainConfig& cfg, std::optional<TrainingState> resume,
                    const TrainHooks& hooks, bool augment_inverse) {
    cfg.validate();
    std::optional<KnowledgeGraph> augmented;
    if (augment_inverse && !g.has_inverse_relations()) augmented = g.with_inverse_relations();
    const KnowledgeGraph& kg = augmented ? *augmented : g;

    TrainingState state;
    if (resume) {
        state = std::move(*resume);
        if (state.params.num_entities() != kg.num_entities() || state.params.num_relations() != kg.num_relations() ||
            state.params.dim() != cfg.d)
            throw Error("resumed parameters do not match the graph / config shape");
    } else {
        state.params = init_params(kg.num_entities(), kg.num_relations(), cfg.d, cfg.seed);
        state.adam = AdamState::zeros_like(state.params);
    }
    if (cfg.epochs <= state.epoch) return state;

    const auto& anchors = kg.triples(Split::Train);
    if (anchors.empty()) throw Error("no training triples");
    const std::size_t workers = std::max<std::size_t>(1, cfg.threads);
    std::vector<Gradient> grads;
    for (std::size_t w = 0; w < workers; ++w) grads.push_back(Gradient::zeros_like(state.params));
    std::vector<std::size_t> order(anchors.size());
    std::vector<TrainingBag> bags;
    std::size_t short_bags = 0;

    for (std::size_t epoch = state.epoch + 1; epoch <= cfg.epochs; ++epoch) {
        auto rng = stream(cfg.seed, epoch);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            const std::size_t end = std::min(order.size(), start + cfg.batch);
            bags.clear();
            for (std::size_t i = start; i < end; ++i) {
                bags.push_back(build_bag(kg, anchors[order[i]], cfg.n, rng));
                short_bags += bags.back().short_of_negatives;
            }
            std::vector<DropoutMask> masks;
            if (cfg.dropout > 0.0 && cfg.mode != ScoreMode::TransE)
                masks = make_dropout_masks(bags.size(), cfg.d, cfg.dropout, rng);

            const std::span<const TrainingBag> all(bags);
            const std::span<const DropoutMask> all_masks(masks);
            parallel_for(bags.size(), workers, [&](std::size_t b, std::size_t e, std::size_t w) {
                accumulate_data_gradient(state.params, all.subspan(b, e - b),
                                         cfg, all_masks.empty() ? all_masks : all_masks.subspan(b, e - b), grads[w]);
            });
            for (std::size_t w = 1; w < workers; ++w) {
                grads[0].add(grads[w]);
                grads[w].clear();
            }
            add_regularization(state.params, cfg.lambda, Regularization::TouchedRows,
                               static_cast<double>(bags.size()) / static_cast<double>(anchors.size()), grads[0]);
            adam_step(state.params, grads[0], state.adam, cfg.lr);
            grads[0].clear();
        }
        state.epoch = epoch;
        state.losses.push_back(epoch_loss(state.params, kg, cfg));
        if (hooks.on_epoch) hooks.on_epoch(state);
    }
    if (short_bags > 0)
        std::clog << "warning: " << short_bags << " bags had fewer than " << cfg.n
                  << " non-linked entities available as negatives\n";
    return state;
}

// ---------------------------------------------------------------------------
// Persistence

void save_training_state(const std::filesystem::path& dir, const TrainingState& state) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "train_state");
        if (!out) throw Error("cannot write training state in " + dir.string());
        out << "epoch " << state.epoch << '\n' << "adam_step " << state.adam.step << '\n';
    }
    const std::pair<const char*, const ModelParams*> moments[] = {{"m", &state.adam.first_moment},
                                                                  {"v", &state.adam.second_moment}};
    for (const auto& [tag, m] : moments) {
        const std::string prefix = std::string("adam_") + tag + "_";
        write_f32(dir / (prefix + "E.f32"), m->entities.values());
        write_f32(dir / (prefix + "R.f32"), m->relations.values());
        write_f32(dir / (prefix + "C.f32"), m->interactions.values());
        write_f32(dir / (prefix + "b.f32"), m->bias);
    }
    write_loss_log(dir / "loss.tsv", state.losses);
}

TrainingState load_training_state(const std::filesystem::path& dir, ModelParams params) {
    std::ifstream in(dir / "train_state");
    if (!in) throw Error("no training state in " + dir.string());
    TrainingState state;
    std::string key;
    while (in >> key) {
        if (key == "epoch") in >> state.epoch;
        else if (key == "adam_step") in >> state.adam.step;
        else throw Error("unknown training state entry '" + key + "'");
    }
    const auto step = state.adam.step;
    state.adam = AdamState::zeros_like(params);
    state.adam.step = step;
    const std::pair<const char*, ModelParams*> moments[] = {{"m", &state.adam.first_moment},
                                                            {"v", &state.adam.second_moment}};
    for (const auto& [tag, m] : moments) {
        const std::string prefix = std::string("adam_") + tag + "_";
        auto fill = [&](const std::string& name, std::span<float> dst) {
            const auto data = read_f32(dir / (prefix + name), dst.size());
            std::copy(data.begin(), data.end(), dst.begin());
        };
        fill("E.f32", m->entities.values());
        fill("R.f32", m->relations.values());
        fill("C.f32", m->interactions.values());
        fill("b.f32", m->bias);
    }
    state.losses = read_loss_log(dir / "loss.tsv");
    if (state.losses.size() != state.epoch) throw Error("loss log length does not match the saved epoch");
    state.params = std::move(params);
    return state;
}

void write_loss_log(const std::filesystem::path& path, std::span<const double> losses) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "epoch\tloss\n" << std::setprecision(17);
    for (std::size_t i = 0; i < losses.size(); ++i) out << i + 1 << '\t' << losses[i] << '\n';
}

std::vector<double> read_loss_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != "epoch\tloss") throw Error(path.string() + ": missing loss log header");
    std::vector<double> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::size_t epoch = 0;
        double value = 0.0;
        if (!(ls >> epoch >> value) || epoch != out.size() + 1)
            throw ParseError(path.string(), lineno, "expected epoch<TAB>loss in sequence");
        out.push_back(value);
    }
    return out;
}

}  // namespace crosse
