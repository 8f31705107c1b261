#include "crosse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace crosse {

namespace {

std::uint32_t to_little_endian(std::uint32_t x) {
    if constexpr (std::endian::native == std::endian::little) {
        return x;
    } else {
        return ((x & 0xFFu) << 24) | ((x & 0xFF00u) << 8) | ((x >> 8) & 0xFF00u) | (x >> 24);
    }
}

}  // namespace

void write_f32(const std::filesystem::path& path, std::span<const float> values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    std::vector<std::uint32_t> buf(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        buf[i] = to_little_endian(std::bit_cast<std::uint32_t>(values[i]));
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    if (!out) throw Error("write failed for " + path.string());
}

std::vector<float> read_f32(const std::filesystem::path& path, std::size_t expected) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw Error("cannot open " + path.string());
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes != expected * 4)
        throw Error(path.filename().string() + ": expected " + std::to_string(expected) + " floats, found " +
                    std::to_string(bytes / 4));
    in.seekg(0);
    std::vector<std::uint32_t> buf(expected);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
    std::vector<float> out(expected);
    for (std::size_t i = 0; i < expected; ++i) out[i] = std::bit_cast<float>(to_little_endian(buf[i]));
    return out;
}

void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params, ScoreMode mode,
                     std::uint64_t seed, const Dictionary& entities, const Dictionary& relations) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream meta(dir / "meta");
        if (!meta) throw Error("cannot write " + (dir / "meta").string());
        meta << "n_e " << params.num_entities() << '\n'
             << "n_r_effective " << params.num_relations() << '\n'
             << "d " << params.dim() << '\n'
             << "mode " << to_string(mode) << '\n'
             << "seed " << seed << '\n';
    }
    write_f32(dir / "E.f32", params.entities.values());
    write_f32(dir / "R.f32", params.relations.values());
    if (mode == ScoreMode::TransE)
        std::filesystem::remove(dir / "C.f32");
    else
        write_f32(dir / "C.f32", params.interactions.values());
    write_f32(dir / "b.f32", params.bias);
    entities.save(dir / "entities.dict");
    relations.save(dir / "relations.dict");
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& dir) {
    std::ifstream in(dir / "meta");
    if (!in) throw Error("no checkpoint meta in " + dir.string());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string k, v;
        if (ls >> k >> v) kv[k] = v;
    }
    auto need = [&](const std::string& k) -> const std::string& {
        auto it = kv.find(k);
        if (it == kv.end()) throw Error("checkpoint meta is missing '" + k + "'");
        return it->second;
    };
    CheckpointMeta m;
    m.num_entities = std::stoull(need("n_e"));
    m.num_relations = std::stoull(need("n_r_effective"));
    m.dim = std::stoull(need("d"));
    m.mode = score_mode_from_string(need("mode"));
    m.seed = std::stoull(need("seed"));
    if (m.dim == 0 || m.num_entities == 0 || m.num_relations == 0) throw Error("checkpoint meta has zero sizes");
    return m;
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    Checkpoint ck;
    ck.meta = read_checkpoint_meta(dir);
    const auto& m = ck.meta;
    auto load_matrix = [&](const char* name, std::size_t rows) {
        Matrix mat(rows, m.dim);
        const auto data = read_f32(dir / name, rows * m.dim);
        std::copy(data.begin(), data.end(), mat.values().begin());
        return mat;
    };
    ck.params.entities = load_matrix("E.f32", m.num_entities);
    ck.params.relations = load_matrix("R.f32", m.num_relations);
    if (std::filesystem::exists(dir / "C.f32")) {
        ck.params.interactions = load_matrix("C.f32", m.num_relations);
    } else if (m.mode != ScoreMode::TransE) {
        throw Error("checkpoint in " + dir.string() + " has no C.f32, required by mode " + to_string(m.mode));
    }
    ck.params.bias = read_f32(dir / "b.f32", m.dim);
    ck.entities = Dictionary::load(dir / "entities.dict");
    ck.relations = Dictionary::load(dir / "relations.dict");
    if (ck.entities.size() != m.num_entities)
        throw Error("entity dictionary has " + std::to_string(ck.entities.size()) + " labels, meta says " +
                    std::to_string(m.num_entities));
    if (ck.relations.size() != m.num_relations && 2 * ck.relations.size() != m.num_relations)
        throw Error("relation dictionary has " + std::to_string(ck.relations.size()) +
                    " labels, incompatible with n_r_effective " + std::to_string(m.num_relations));
    return ck;
}

}  // namespace crosse
