#include "crosse/model.hpp"

#include <random>

namespace crosse {

std::string to_string(ScoreMode mode) {
    switch (mode) {
        case ScoreMode::CrossE: return "crosse";
        case ScoreMode::CrossE_S: return "crosse_s";
        case ScoreMode::TransE: return "transe";
    }
    return "?";
}

ScoreMode score_mode_from_string(const std::string& name) {
    if (name == "crosse") return ScoreMode::CrossE;
    if (name == "crosse_s") return ScoreMode::CrossE_S;
    if (name == "transe") return ScoreMode::TransE;
    throw Error("unknown mode '" + name + "' (expected crosse, crosse_s or transe)");
}

double init_bound(std::size_t dim) { return 6.0 / std::sqrt(static_cast<double>(dim)); }

ModelParams init_params(std::size_t num_entities, std::size_t num_relations, std::size_t dim,
                        std::uint64_t seed) {
    if (dim == 0) throw Error("embedding dimension must be at least 1");
    if (num_entities == 0 || num_relations == 0) throw Error("cannot initialize a model without entities or relations");
    const auto bound = static_cast<float>(init_bound(dim));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> uniform(-bound, bound);
    ModelParams p;
    p.entities = Matrix(num_entities, dim);
    p.relations = Matrix(num_relations, dim);
    p.interactions = Matrix(num_relations, dim);
    p.bias.assign(dim, 0.0f);
    for (auto* m : {&p.entities, &p.relations, &p.interactions})
        for (auto& x : m->values()) x = uniform(rng);
    return p;
}

void check_ids(const ModelParams& p, EntityId h, RelationId r, ScoreMode mode) {
    if (h < 0 || static_cast<std::size_t>(h) >= p.num_entities())
        throw Error("entity id " + std::to_string(h) + " out of range");
    if (r < 0 || static_cast<std::size_t>(r) >= p.num_relations())
        throw Error("relation id " + std::to_string(r) + " out of range");
    if (mode == ScoreMode::CrossE && !p.has_interactions())
        throw Error("crosse mode needs the interaction matrix, which this model does not have");
}

double dot(std::span<const double> a, std::span<const float> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * static_cast<double>(b[k]);
    return s;
}

Vector interaction_embedding_entity(const ModelParams& p, EntityId h, RelationId r) {
    check_ids(p, h, r, ScoreMode::CrossE);
    const auto c = p.interactions.row(static_cast<std::size_t>(r));
    const auto e = p.entities.row(static_cast<std::size_t>(h));
    Vector out(p.dim());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = static_cast<double>(c[k]) * e[k];
    return out;
}

Vector interaction_embedding_relation(const ModelParams& p, EntityId h, RelationId r) {
    Vector out = interaction_embedding_entity(p, h, r);
    const auto rel = p.relations.row(static_cast<std::size_t>(r));
    for (std::size_t k = 0; k < out.size(); ++k) out[k] *= rel[k];
    return out;
}

Vector query(const ModelParams& p, EntityId h, RelationId r, ScoreMode mode) {
    check_ids(p, h, r, mode);
    const auto e = p.entities.row(static_cast<std::size_t>(h));
    const auto rel = p.relations.row(static_cast<std::size_t>(r));
    const std::size_t d = p.dim();
    Vector q(d);
    switch (mode) {
        case ScoreMode::CrossE: {
            const auto c = p.interactions.row(static_cast<std::size_t>(r));
            for (std::size_t k = 0; k < d; ++k) {
                const double hi = static_cast<double>(c[k]) * e[k];
                q[k] = std::tanh(hi + hi * rel[k] + p.bias[k]);
            }
            break;
        }
        case ScoreMode::CrossE_S:
            for (std::size_t k = 0; k < d; ++k)
                q[k] = std::tanh(static_cast<double>(e[k]) + rel[k] + p.bias[k]);
            break;
        case ScoreMode::TransE:
            for (std::size_t k = 0; k < d; ++k) q[k] = static_cast<double>(e[k]) + rel[k];
            break;
    }
    return q;
}

namespace {

double transe_logit(std::span<const double> q, std::span<const float> t) {
    double s = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) {
        const double diff = q[k] - t[k];
        s += diff * diff;
    }
    return -std::sqrt(s);
}

}  // namespace

double logit(const ModelParams& p, const Triple& t, ScoreMode mode) {
    if (t.tail < 0 || static_cast<std::size_t>(t.tail) >= p.num_entities())
        throw Error("entity id " + std::to_string(t.tail) + " out of range");
    const Vector q = query(p, t.head, t.relation, mode);
    const auto tail = p.entities.row(static_cast<std::size_t>(t.tail));
    return mode == ScoreMode::TransE ? transe_logit(q, tail) : dot(q, tail);
}

double score(const ModelParams& p, const Triple& t, ScoreMode mode) {
    const double z = logit(p, t, mode);
    return mode == ScoreMode::TransE ? z : sigmoid(z);
}

std::vector<double> logits_all_tails(const ModelParams& p, EntityId h, RelationId r, ScoreMode mode) {
    const Vector q = query(p, h, r, mode);
    std::vector<double> out(p.num_entities());
    if (mode == ScoreMode::TransE) {
        for (std::size_t e = 0; e < out.size(); ++e) out[e] = transe_logit(q, p.entities.row(e));
    } else {
        for (std::size_t e = 0; e < out.size(); ++e) out[e] = dot(q, p.entities.row(e));
    }
    return out;
}

std::vector<double> score_all_tails(const ModelParams& p, EntityId h, RelationId r, ScoreMode mode) {
    auto out = logits_all_tails(p, h, r, mode);
    if (mode != ScoreMode::TransE)
        for (auto& z : out) z = sigmoid(z);
    return out;
}

std::size_t param_count(const ModelParams& p) {
    return p.entities.size() + p.relations.size() + p.interactions.size() + p.bias.size();
}

bool all_finite(const ModelParams& p) {
    auto finite = [](std::span<const float> v) {
        for (float x : v)
            if (!std::isfinite(x)) return false;
        return true;
    };
    return finite(p.entities.values()) && finite(p.relations.values()) &&
           finite(p.interactions.values()) && finite(p.bias);
}

}  // namespace crosse
