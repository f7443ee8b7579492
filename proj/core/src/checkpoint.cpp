#include "horai/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace horai {

namespace {

static_assert(std::endian::native == std::endian::little,
              "payload writer assumes a little-endian host");

std::string shape_line(const Shape& s) {
    std::string out = std::to_string(s.size());
    for (int d : s) out += " " + std::to_string(d);
    return out;
}

}  // namespace

void write_archive(const std::string& path, const TensorArchive& archive) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write " + path);

    std::uint64_t offset = 0;
    std::ostringstream head;
    head << archive.kind << " v1\n";
    head << "config " << (archive.config_json.empty() ? "-" : archive.config_json) << "\n";
    head << "rng " << (archive.rng_state.empty() ? "-" : archive.rng_state) << "\n";
    for (const auto& [name, tensor] : archive.tensors) {
        if (name.find(' ') != std::string::npos)
            throw InternalError("tensor name contains a space: " + name);
        head << "tensor " << name << " " << shape_line(tensor.shape) << " " << offset << "\n";
        offset += tensor.numel() * sizeof(float);
    }
    head << "payload " << offset << "\n";

    const std::string header = head.str();
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& [name, tensor] : archive.tensors)
        out.write(reinterpret_cast<const char*>(tensor.data.data()),
                  static_cast<std::streamsize>(tensor.data.size() * sizeof(float)));
    if (!out) throw ParseError("short write to " + path);
}

TensorArchive read_archive(const std::string& path, const std::string& expected_kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);

    TensorArchive archive;
    std::string line;
    if (!std::getline(in, line) || line != expected_kind + " v1")
        throw CorruptionError(path + ": bad magic, expected '" + expected_kind + " v1'");
    archive.kind = expected_kind;

    if (!std::getline(in, line) || line.rfind("config ", 0) != 0)
        throw CorruptionError(path + ": missing config line");
    archive.config_json = line.substr(7);
    if (archive.config_json == "-") archive.config_json.clear();

    if (!std::getline(in, line) || line.rfind("rng ", 0) != 0)
        throw CorruptionError(path + ": missing rng line");
    archive.rng_state = line.substr(4);
    if (archive.rng_state == "-") archive.rng_state.clear();

    struct Entry {
        std::string name;
        Shape shape;
        std::uint64_t offset;
    };
    std::vector<Entry> entries;
    std::uint64_t payload_bytes = 0;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "tensor") {
            Entry e;
            std::size_t rank = 0;
            ls >> e.name >> rank;
            e.shape.resize(rank);
            for (auto& d : e.shape) ls >> d;
            ls >> e.offset;
            if (!ls) throw CorruptionError(path + ": malformed tensor line: " + line);
            entries.push_back(std::move(e));
        } else if (tag == "payload") {
            ls >> payload_bytes;
            if (!ls) throw CorruptionError(path + ": malformed payload line");
            break;
        } else {
            throw CorruptionError(path + ": unexpected manifest line: " + line);
        }
    }

    std::vector<char> payload(payload_bytes);
    in.read(payload.data(), static_cast<std::streamsize>(payload_bytes));
    if (static_cast<std::uint64_t>(in.gcount()) != payload_bytes)
        throw CorruptionError(path + ": payload truncated (" + std::to_string(in.gcount()) +
                              " of " + std::to_string(payload_bytes) + " bytes)");
    char extra;
    if (in.read(&extra, 1); in.gcount() != 0)
        throw CorruptionError(path + ": trailing bytes after payload");

    for (const auto& e : entries) {
        const std::size_t n = shape_numel(e.shape);
        if (e.offset + n * sizeof(float) > payload_bytes)
            throw CorruptionError(path + ": tensor " + e.name + " runs past the payload");
        Tensor t(e.shape);
        std::memcpy(t.data.data(), payload.data() + e.offset, n * sizeof(float));
        archive.tensors.emplace_back(e.name, std::move(t));
    }
    return archive;
}

void save_checkpoint(const HoraiModel& model, const std::string& path,
                     const std::string& config_json, const std::string& rng_state) {
    TensorArchive archive;
    archive.kind = "HORAI-CKPT";
    archive.config_json = config_json;
    archive.rng_state = rng_state;
    const ParamStore& ps = model.params();
    for (std::size_t i = 0; i < ps.size(); ++i)
        archive.tensors.emplace_back(ps.at(i).name, ps.at(i).value);
    write_archive(path, archive);
}

CheckpointInfo load_checkpoint(HoraiModel& model, const std::string& path) {
    TensorArchive archive = read_archive(path, "HORAI-CKPT");
    ParamStore& ps = model.params();
    std::map<std::string, const Tensor*> loaded;
    for (const auto& [name, tensor] : archive.tensors) loaded[name] = &tensor;

    for (std::size_t i = 0; i < ps.size(); ++i) {
        Parameter& p = ps.at(i);
        auto it = loaded.find(p.name);
        if (it == loaded.end())
            throw CorruptionError(path + ": tensor " + p.name + " missing from checkpoint");
        if (it->second->shape != p.value.shape)
            throw ShapeError("checkpoint tensor " + p.name + " has shape " +
                             shape_str(it->second->shape) + ", model expects " +
                             shape_str(p.value.shape));
    }
    if (loaded.size() != ps.size())
        throw CorruptionError(path + ": checkpoint holds " + std::to_string(loaded.size()) +
                              " tensors, model has " + std::to_string(ps.size()));
    for (std::size_t i = 0; i < ps.size(); ++i) {
        Parameter& p = ps.at(i);
        p.value.data = loaded.at(p.name)->data;
    }
    return {archive.config_json, archive.rng_state};
}

// ---------------------------------------------------------------------------
// ModelConfig <-> JSON
// ---------------------------------------------------------------------------

std::string model_config_to_json(const ModelConfig& cfg) {
    nlohmann::json j;
    j["context_len"] = cfg.context_len;
    j["patch_size"] = cfg.patch_size;
    j["alpha"] = cfg.alpha;
    j["d_model"] = cfg.d_model;
    j["d_ts"] = cfg.encoder.d_ts;
    j["d_text"] = cfg.encoder.d_text;
    j["d_img"] = cfg.encoder.d_img;
    j["enc_layers"] = cfg.encoder.n_layers;
    j["enc_heads"] = cfg.encoder.n_heads;
    j["freeze_ts"] = cfg.encoder.freeze_ts;
    j["freeze_text"] = cfg.encoder.freeze_text;
    j["freeze_img"] = cfg.encoder.freeze_img;
    j["dec_layers"] = cfg.dec_layers;
    j["dec_heads"] = cfg.dec_heads;
    j["n_experts"] = cfg.n_experts;
    j["top_k"] = cfg.top_k;
    j["ffn_hidden"] = cfg.ffn_hidden;
    j["vocab_size"] = cfg.vocab_size;
    j["text_len"] = cfg.text_len;
    j["img_size"] = cfg.img_size;
    j["img_patch"] = cfg.img_patch;
    j["no_modality"] = cfg.ablation.no_modality;
    j["modality_exchange"] = cfg.ablation.modality_exchange;
    j["no_moe_ffn"] = cfg.ablation.no_moe_ffn;
    j["no_freq_router"] = cfg.ablation.no_freq_router;
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text, nullptr, false);
    if (j.is_discarded()) throw ParseError("model config snapshot is not valid JSON");
    ModelConfig cfg;
    cfg.context_len = j.at("context_len").get<int>();
    cfg.patch_size = j.at("patch_size").get<int>();
    cfg.alpha = j.at("alpha").get<float>();
    cfg.d_model = j.at("d_model").get<int>();
    cfg.encoder.d_ts = j.at("d_ts").get<int>();
    cfg.encoder.d_text = j.at("d_text").get<int>();
    cfg.encoder.d_img = j.at("d_img").get<int>();
    cfg.encoder.n_layers = j.at("enc_layers").get<int>();
    cfg.encoder.n_heads = j.at("enc_heads").get<int>();
    cfg.encoder.freeze_ts = j.at("freeze_ts").get<bool>();
    cfg.encoder.freeze_text = j.at("freeze_text").get<bool>();
    cfg.encoder.freeze_img = j.at("freeze_img").get<bool>();
    cfg.dec_layers = j.at("dec_layers").get<int>();
    cfg.dec_heads = j.at("dec_heads").get<int>();
    cfg.n_experts = j.at("n_experts").get<int>();
    cfg.top_k = j.at("top_k").get<int>();
    cfg.ffn_hidden = j.at("ffn_hidden").get<int>();
    cfg.vocab_size = j.at("vocab_size").get<int>();
    cfg.text_len = j.at("text_len").get<int>();
    cfg.img_size = j.at("img_size").get<int>();
    cfg.img_patch = j.at("img_patch").get<int>();
    cfg.ablation.no_modality = j.at("no_modality").get<bool>();
    cfg.ablation.modality_exchange = j.at("modality_exchange").get<bool>();
    cfg.ablation.no_moe_ffn = j.at("no_moe_ffn").get<bool>();
    cfg.ablation.no_freq_router = j.at("no_freq_router").get<bool>();
    return cfg;
}

}  // namespace horai
