#include "atxf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "atxf/errors.hpp"
#include "atxf/sha256.hpp"

namespace atxf {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'A', 'T', 'X', 'F'};

template <typename U>
void put_le(std::string& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(const std::string& in, std::size_t at) {
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
        v |= static_cast<U>(static_cast<unsigned char>(in[at + i])) << (8 * i);
    return v;
}

void put_float(std::string& out, float f) { put_le(out, std::bit_cast<std::uint32_t>(f)); }

float get_float(const std::string& in, std::size_t at) { return std::bit_cast<float>(get_le<std::uint32_t>(in, at)); }

}  // namespace

json to_json(const model::ModelConfig& c) {
    return json{{"vocab_size", c.vocab_size},
                {"d_model", c.d_model},
                {"num_heads", c.num_heads},
                {"d_ff", c.d_ff},
                {"num_encoder_layers", c.num_encoder_layers},
                {"num_decoder_layers", c.num_decoder_layers},
                {"max_len", c.max_len},
                {"dropout", c.dropout}};
}

model::ModelConfig model_config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("model config must be a JSON object");
    model::ModelConfig c;
    const std::pair<const char*, std::size_t*> sizes[] = {
        {"vocab_size", &c.vocab_size},   {"d_model", &c.d_model},
        {"num_heads", &c.num_heads},     {"d_ff", &c.d_ff},
        {"num_encoder_layers", &c.num_encoder_layers}, {"num_decoder_layers", &c.num_decoder_layers},
        {"max_len", &c.max_len}};
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (const auto& [name, field] : sizes)
            if (key == name) {
                if (!value.is_number_unsigned()) throw ConfigError("model config '" + key + "' must be a non-negative integer");
                *field = value.get<std::size_t>();
                known = true;
            }
        if (key == "dropout") {
            if (!value.is_number()) throw ConfigError("model config 'dropout' must be a number");
            c.dropout = value.get<double>();
            known = true;
        }
        if (!known) throw ConfigError("unknown model config key '" + key + "'");
    }
    c.validate();
    return c;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
    const auto& params = ck.parameters;
    json directory = json::array();
    std::string payload;
    payload.reserve(params.element_count() * 4);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& t = params.tensors()[i];
        directory.push_back({{"name", params.name(i)}, {"shape", t.shape()}, {"offset", payload.size()}});
        for (float f : t.values()) put_float(payload, f);
    }
    json header{{"config", to_json(ck.config())},
                {"vocabulary_fingerprint", ck.vocabulary_fingerprint},
                {"provenance",
                 {{"domain", ck.provenance.domain},
                  {"source_domain", ck.provenance.source_domain ? json(*ck.provenance.source_domain) : json(nullptr)}}},
                {"tensors", directory}};
    const std::string header_text = header.dump();

    std::string out(kMagic, 4);
    put_le<std::uint16_t>(out, kCheckpointVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(header_text.size()));
    out += header_text;
    out += payload;
    const auto digest = sha256(std::string_view(payload));
    out.append(reinterpret_cast<const char*>(digest.data()), digest.size());

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write checkpoint " + tmp.string());
        f.write(out.data(), static_cast<std::streamsize>(out.size()));
        if (!f) throw IoError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read checkpoint " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const std::string where = " in " + path.string();

    if (bytes.size() < 10 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw CheckpointError("bad magic" + where);
    const auto version = get_le<std::uint16_t>(bytes, 4);
    if (version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + where);
    const std::size_t header_len = get_le<std::uint32_t>(bytes, 6);
    if (bytes.size() < 10 + header_len) throw CheckpointError("truncated header" + where);

    json header;
    try {
        header = json::parse(bytes.substr(10, header_len));
    } catch (const json::exception& e) {
        throw CheckpointError("malformed header" + where + ": " + e.what());
    }

    Checkpoint ck;
    std::vector<model::NamedTensor<float>> tensors;
    std::size_t payload_len = 0;
    try {
        if (!header.contains("vocabulary_fingerprint") || !header["vocabulary_fingerprint"].is_string() ||
            header["vocabulary_fingerprint"].get<std::string>().empty())
            throw CheckpointError("vocabulary fingerprint absent" + where);
        ck.vocabulary_fingerprint = header["vocabulary_fingerprint"].get<std::string>();
        const auto& prov = header.at("provenance");
        ck.provenance.domain = prov.at("domain").get<std::string>();
        if (prov.contains("source_domain") && !prov["source_domain"].is_null())
            ck.provenance.source_domain = prov["source_domain"].get<std::string>();
        const auto config = model_config_from_json(header.at("config"));

        const std::size_t payload_start = 10 + header_len;
        for (const auto& entry : header.at("tensors")) {
            const Shape shape = entry.at("shape").get<Shape>();
            const std::size_t offset = entry.at("offset").get<std::size_t>();
            if (offset != payload_len)
                throw CheckpointError("tensor '" + entry.at("name").get<std::string>() + "' is not contiguous" + where);
            const std::size_t n = numel(shape);
            payload_len += 4 * n;
            if (payload_start + payload_len + 32 > bytes.size()) throw CheckpointError("truncated payload" + where);
            std::vector<float> values(n);
            for (std::size_t i = 0; i < n; ++i) values[i] = get_float(bytes, payload_start + offset + 4 * i);
            tensors.push_back({entry.at("name").get<std::string>(), Tensor<float>(shape, std::move(values))});
        }
        if (payload_start + payload_len + 32 != bytes.size())
            throw CheckpointError("payload length does not match the tensor directory" + where);
        const auto digest = sha256(std::string_view(bytes).substr(payload_start, payload_len));
        if (std::memcmp(digest.data(), bytes.data() + payload_start + payload_len, 32) != 0)
            throw CheckpointError("payload checksum mismatch" + where);
        ck.parameters = model::ModelParameters<float>::from_tensors(config, std::move(tensors));
    } catch (const json::exception& e) {
        throw CheckpointError("malformed header" + where + ": " + e.what());
    } catch (const CheckpointError&) {
        throw;
    } catch (const Error& e) {
        throw CheckpointError(std::string("invalid checkpoint") + where + ": " + e.what());
    }
    return ck;
}

void require_vocabulary(const Checkpoint& ck, const Vocabulary& active) {
    if (ck.vocabulary_fingerprint != active.fingerprint())
        throw TransferError("checkpoint for '" + ck.provenance.domain + "' was trained with vocabulary " +
                            ck.vocabulary_fingerprint.substr(0, 12) + ", active vocabulary is " +
                            active.fingerprint().substr(0, 12));
    if (ck.config().vocab_size != active.size())
        throw TransferError("checkpoint vocab_size " + std::to_string(ck.config().vocab_size) +
                            " != active vocabulary size " + std::to_string(active.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const Vocabulary& active) {
    auto ck = load_checkpoint(path);
    require_vocabulary(ck, active);
    return ck;
}

}  // namespace atxf
