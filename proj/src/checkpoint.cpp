#include "almt/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "almt/binio.hpp"
#include "almt/config_json.hpp"

namespace almt {

namespace {
constexpr char kMagic[4] = {'A', 'L', 'M', 'T'};
}

void save_checkpoint(const ALMTModel& model, const std::string& path) {
    std::string out;
    out.append(kMagic, 4);
    binio::put_u32(out, kCheckpointVersion);
    const std::string config = to_json(model.config()).dump();
    binio::put_u32(out, static_cast<std::uint32_t>(config.size()));
    out.append(config);
    binio::put_u32(out, static_cast<std::uint32_t>(model.parameters().size()));
    for (const auto& p : model.parameters()) {
        binio::put_u32(out, static_cast<std::uint32_t>(p.name.size()));
        out.append(p.name);
        const Shape& s = p.tensor.shape();
        binio::put_u32(out, static_cast<std::uint32_t>(s.rank()));
        for (int i = 0; i < s.rank(); ++i) binio::put_u32(out, static_cast<std::uint32_t>(s[i]));
        for (std::int64_t i = 0; i < p.tensor.numel(); ++i) binio::put_f32(out, p.tensor.data()[i]);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ValidationError("checkpoint: cannot open '" + path + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw ValidationError("checkpoint: write to '" + path + "' failed");
}

ALMTModel load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValidationError("checkpoint: cannot open '" + path + "' for reading");
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    binio::Reader r{buf, 0, "checkpoint"};
    r.need(4, "magic");
    if (std::memcmp(buf.data(), kMagic, 4) != 0)
        throw FormatError("checkpoint: bad magic at byte 0 in '" + path + "'");
    r.at = 4;
    const std::uint32_t version = r.u32("format version");
    if (version != kCheckpointVersion)
        throw FormatError("checkpoint: unsupported format version " + std::to_string(version) +
                          " at byte 4");
    const std::uint32_t config_len = r.u32("config length");
    const std::string config_text = r.bytes(config_len, "config block");
    ModelConfig config;
    try {
        config = model_config_from_json(nlohmann::json::parse(config_text));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint: config block is not valid JSON: ") + e.what());
    }

    ALMTModel model(config, 0);
    const std::uint32_t count = r.u32("parameter count");
    if (count != model.parameters().size())
        throw FormatError("checkpoint: file has " + std::to_string(count) + " parameters, config " +
                          "implies " + std::to_string(model.parameters().size()));
    for (auto& p : model.parameters()) {
        const std::size_t entry_at = r.at;
        const std::uint32_t name_len = r.u32("parameter name length");
        const std::string name = r.bytes(name_len, "parameter name");
        if (name != p.name)
            throw FormatError("checkpoint: parameter '" + name + "' at byte " +
                              std::to_string(entry_at) + " does not match expected '" + p.name +
                              "'");
        const std::uint32_t rank = r.u32("parameter rank");
        if (rank != static_cast<std::uint32_t>(p.tensor.rank()))
            throw FormatError("checkpoint: parameter '" + name + "' rank " + std::to_string(rank) +
                              " does not match expected " + std::to_string(p.tensor.rank()));
        for (int i = 0; i < p.tensor.rank(); ++i) {
            const std::uint32_t extent = r.u32("parameter extent");
            if (extent != static_cast<std::uint32_t>(p.tensor.shape()[i]))
                throw FormatError("checkpoint: parameter '" + name + "' extent " +
                                  std::to_string(extent) + " does not match expected shape " +
                                  p.tensor.shape().str());
        }
        for (std::int64_t i = 0; i < p.tensor.numel(); ++i)
            p.tensor.data()[i] = r.f32("parameter payload");
    }
    if (r.at != buf.size())
        throw FormatError("checkpoint: " + std::to_string(buf.size() - r.at) +
                          " trailing bytes at byte " + std::to_string(r.at));
    return model;
}

} // namespace almt
