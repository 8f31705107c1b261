#include "crosse/commands.hpp"

#include <bit>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "crosse/checkpoint.hpp"

#ifndef CROSSE_VERSION
#define CROSSE_VERSION "unknown"
#endif

namespace crosse {

std::string version() { return CROSSE_VERSION; }

namespace {

constexpr char kCacheMagic[4] = {'C', 'R', 'X', 'T'};
constexpr std::uint32_t kCacheVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
    static_assert(std::is_integral_v<T>);
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    char bytes[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((u >> (8 * i)) & 0xFF);
    out.write(bytes, sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    using U = std::make_unsigned_t<T>;
    unsigned char bytes[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw Error("truncated triple cache");
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(static_cast<U>(bytes[i]) << (8 * i));
    return static_cast<T>(u);
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream out;
    out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return out.str();
}

void print_stats(std::ostream& log, const DatasetStats& s) {
    log << "entities\trelations\ttrain\tvalid\ttest\n"
        << s.entities << '\t' << s.relations << '\t' << s.train << '\t' << s.valid << '\t' << s.test << '\n';
}

std::filesystem::path require_file(const std::filesystem::path& p) {
    if (!std::filesystem::is_regular_file(p)) throw Error("missing file: " + p.string());
    return p;
}

}  // namespace

void write_triple_cache(const std::filesystem::path& path, const KnowledgeGraph& g) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out.write(kCacheMagic, 4);
    put<std::uint32_t>(out, kCacheVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(g.num_entities()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(g.num_forward_relations()));
    for (Split s : {Split::Train, Split::Valid, Split::Test}) put<std::uint64_t>(out, g.triples(s).size());
    for (Split s : {Split::Train, Split::Valid, Split::Test})
        for (const auto& t : g.triples(s)) {
            put<std::int32_t>(out, t.head);
            put<std::int32_t>(out, t.relation);
            put<std::int32_t>(out, t.tail);
        }
    if (!out) throw Error("write failed for " + path.string());
}

DatasetStats cmd_prep(const PrepOptions& options, std::ostream& log) {
    Dictionary entities, relations;
    auto train = load_triples(require_file(options.train), entities, relations);
    auto valid = load_triples(require_file(options.valid), entities, relations);
    auto test = load_triples(require_file(options.test), entities, relations);
    if (entities.size() == 0 || relations.size() == 0) throw Error("dataset contains no triples");
    const auto g = KnowledgeGraph::build(entities.size(), relations.size(), std::move(train), std::move(valid),
                                         std::move(test));
    std::filesystem::create_directories(options.out);
    entities.save(options.out / "entities.dict");
    relations.save(options.out / "relations.dict");
    write_triple_cache(options.out / "triples.bin", g);
    DatasetStats stats{entities.size(), relations.size(), g.triples(Split::Train).size(),
                       g.triples(Split::Valid).size(), g.triples(Split::Test).size()};
    print_stats(log, stats);
    return stats;
}

Dataset load_dataset(const std::filesystem::path& dir) {
    Dataset ds;
    ds.entities = Dictionary::load(require_file(dir / "entities.dict"));
    ds.relations = Dictionary::load(require_file(dir / "relations.dict"));
    std::ifstream in(require_file(dir / "triples.bin"), std::ios::binary);
    char magic[4];
    if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kCacheMagic)) throw Error("not a triple cache: " + dir.string());
    if (get<std::uint32_t>(in) != kCacheVersion) throw Error("unsupported triple cache version");
    const auto ne = get<std::uint32_t>(in);
    const auto nr = get<std::uint32_t>(in);
    if (ne != ds.entities.size() || nr != ds.relations.size())
        throw Error("triple cache sizes disagree with the dictionaries in " + dir.string());
    std::array<std::uint64_t, 3> counts{};
    for (auto& c : counts) c = get<std::uint64_t>(in);
    std::array<std::vector<Triple>, 3> splits;
    for (std::size_t s = 0; s < 3; ++s) {
        splits[s].resize(counts[s]);
        for (auto& t : splits[s]) {
            t.head = get<std::int32_t>(in);
            t.relation = get<std::int32_t>(in);
            t.tail = get<std::int32_t>(in);
        }
    }
    ds.graph = KnowledgeGraph::build(ne, nr, std::move(splits[0]), std::move(splits[1]), std::move(splits[2]));
    return ds;
}

TrainConfig resolve_config(const TrainCommand& command) {
    TrainConfig cfg;
    if (command.config) cfg = load_config(*command.config, cfg);
    for (const auto& [key, value] : command.overrides) set_config_value(cfg, key, value);
    cfg.validate();
    return cfg;
}

TrainingState cmd_train(const TrainCommand& command, std::ostream& log) {
    const TrainConfig cfg = resolve_config(command);
    const Dataset ds = load_dataset(command.data);
    std::filesystem::create_directories(command.out);

    std::optional<TrainingState> resume;
    if (command.resume) {
        auto ck = load_checkpoint(command.out);
        if (ck.meta.mode != cfg.mode || ck.meta.seed != cfg.seed)
            throw Error("cannot resume: checkpoint mode/seed differ from the resolved config");
        resume = load_training_state(command.out, std::move(ck.params));
        log << "resuming after epoch " << resume->epoch << '\n';
    }

    nlohmann::json manifest{
        {"version", version()},
        {"data", std::filesystem::absolute(command.data).string()},
        {"checkpoint_dir", std::filesystem::absolute(command.out).string()},
        {"seed", cfg.seed},
        {"config", nlohmann::json::object()},
        {"resumed_from_epoch", resume ? resume->epoch : 0},
        {"started_at", utc_timestamp()},
    };
    {
        std::istringstream lines(format_config(cfg));
        std::string line;
        while (std::getline(lines, line)) {
            const auto eq = line.find(" = ");
            manifest["config"][line.substr(0, eq)] = line.substr(eq + 3);
        }
    }
    {
        std::ofstream out(command.out / "manifest.json");
        out << manifest.dump(2) << '\n';
        std::ofstream resolved(command.out / "config.resolved");
        resolved << format_config(cfg);
    }

    auto save = [&](const TrainingState& state) {
        save_checkpoint(command.out, state.params, cfg.mode, cfg.seed, ds.entities, ds.relations);
        save_training_state(command.out, state);
    };
    TrainHooks hooks;
    hooks.on_epoch = [&](const TrainingState& state) {
        log << "epoch " << state.epoch << "\tloss " << std::setprecision(10) << state.losses.back() << '\n';
        if (cfg.checkpoint_every > 0 && state.epoch % cfg.checkpoint_every == 0) save(state);
    };
    auto state = train(ds.graph, cfg, std::move(resume), hooks);
    save(state);

    manifest["finished_at"] = utc_timestamp();
    manifest["epochs_completed"] = state.epoch;
    std::ofstream out(command.out / "manifest.json");
    out << manifest.dump(2) << '\n';
    return state;
}

namespace {

struct Loaded {
    Checkpoint checkpoint;
    Dataset dataset;
    ScoreMode mode;
};

Loaded load_for_inference(const std::filesystem::path& checkpoint, const std::filesystem::path& data,
                          std::optional<ScoreMode> mode) {
    Loaded l{load_checkpoint(checkpoint), load_dataset(data), ScoreMode::CrossE};
    const auto& m = l.checkpoint.meta;
    const std::size_t ne = l.dataset.entities.size();
    const std::size_t nr = l.dataset.relations.size();
    if (m.num_entities != ne || (m.num_relations != nr && m.num_relations != 2 * nr)) {
        std::ostringstream msg;
        msg << "checkpoint/dataset size mismatch: entities " << m.num_entities << " vs " << ne << " (diff "
            << static_cast<long long>(m.num_entities) - static_cast<long long>(ne) << "), relations "
            << m.num_relations << " vs " << nr << " forward / " << 2 * nr << " with inverses";
        throw Error(msg.str());
    }
    if (!(l.checkpoint.entities == l.dataset.entities) || !(l.checkpoint.relations == l.dataset.relations))
        throw Error("checkpoint dictionaries do not match the dataset dictionaries");
    l.mode = mode.value_or(m.mode);
    if (l.mode == ScoreMode::CrossE && !l.checkpoint.params.has_interactions())
        throw Error("mode crosse needs the interaction matrix C, which this checkpoint lacks");
    return l;
}

}  // namespace

Evaluation cmd_eval(const EvalCommand& command, std::ostream& log) {
    const auto loaded = load_for_inference(command.checkpoint, command.data, command.mode);
    auto result = evaluate(loaded.checkpoint.params, loaded.dataset.graph, command.split, loaded.mode, command.threads);
    std::filesystem::create_directories(command.out);
    write_metrics_tsv(command.out / "metrics.tsv", result.table, command.settings);
    write_metrics_json(command.out / "metrics.json", result.table, command.settings);
    write_rank_records(command.out / "ranks.tsv", result.records);
    const auto& all = result.table.overall();
    log << std::setprecision(4) << std::fixed;
    if (command.settings.raw)
        log << "raw\tMR " << all.raw.mr << "\tMRR " << all.raw.mrr << "\tHit@1 " << all.raw.hit1 << "\tHit@3 "
            << all.raw.hit3 << "\tHit@10 " << all.raw.hit10 << '\n';
    if (command.settings.filter)
        log << "filter\tMR " << all.filtered.mr << "\tMRR " << all.filtered.mrr << "\tHit@1 " << all.filtered.hit1
            << "\tHit@3 " << all.filtered.hit3 << "\tHit@10 " << all.filtered.hit10 << '\n';
    log.unsetf(std::ios::fixed);
    return result;
}

std::vector<ExplanationMetricsRow> cmd_explain(const ExplainCommand& command, std::ostream& log) {
    const auto loaded = load_for_inference(command.checkpoint, command.data, command.mode);
    const auto& g = loaded.dataset.graph;
    std::size_t targets = 0;
    for (const auto& t : g.triples(command.split)) targets += static_cast<std::size_t>(t.relation) < g.num_forward_relations();
    if (targets == 0) throw Error("the " + to_string(command.split) + " split is empty");
    if (command.k_r.empty() || command.k_e.empty()) throw Error("need at least one k_r and one k_e value");

    std::filesystem::create_directories(command.out);
    std::vector<ExplanationMetricsRow> rows;
    for (std::size_t ke : command.k_e) {
        for (std::size_t kr : command.k_r) {
            ExplainOptions opt;
            opt.k_r = kr;
            opt.k_e = ke;
            opt.mode = loaded.mode;
            const auto run = evaluate_explanations(loaded.checkpoint.params, g, command.split, opt, command.threads);
            write_explanations_jsonl(
                command.out / ("explanations_kr" + std::to_string(kr) + "_ke" + std::to_string(ke) + ".jsonl"),
                run.explained, &loaded.dataset.entities, &loaded.dataset.relations);
            rows.push_back({kr, ke, run.metrics});
            log << "k_r " << kr << "\tk_e " << ke << "\trecall " << run.metrics.recall << "\tavg_support ";
            if (run.metrics.avg_support)
                log << *run.metrics.avg_support << '\n';
            else
                log << "NA\n";
        }
    }
    write_explanation_metrics_tsv(command.out / "explain_metrics.tsv", rows);
    return rows;
}

std::vector<std::size_t> parse_k_list(const std::string& text) {
    std::vector<std::size_t> out;
    std::istringstream in(text);
    std::string item;
    auto number = [&](const std::string& s) {
        std::size_t used = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != s.size() || s.empty() || v == 0) throw Error("invalid k value '" + s + "'");
        return static_cast<std::size_t>(v);
    };
    while (std::getline(in, item, ',')) {
        const auto dash = item.find('-');
        if (dash == std::string::npos) {
            out.push_back(number(item));
            continue;
        }
        const auto lo = number(item.substr(0, dash));
        const auto hi = number(item.substr(dash + 1));
        if (lo > hi) throw Error("empty k range '" + item + "'");
        for (auto k = lo; k <= hi; ++k) out.push_back(k);
    }
    if (out.empty()) throw Error("empty k list");
    return out;
}

}  // namespace crosse
