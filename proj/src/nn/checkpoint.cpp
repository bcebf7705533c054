#include "ganmex/nn/checkpoint.hpp"

#include "ganmex/io/binary.hpp"

namespace ganmex::nn {

std::string serialize_network(const Network& net) {
    io::BinaryWriter w;
    w.raw(kNetworkMagic);
    w.str(net.describe());
    w.u64(net.parameters().size());
    for (const auto& p : net.parameters()) {
        w.str(p.name);
        w.tensor(p.value);
    }
    return w.bytes();
}

Network deserialize_network(std::string_view bytes) {
    io::BinaryReader r(bytes);
    io::expect_magic(r, kNetworkMagic);
    auto [input, layers] = [&] {
        const std::string text = r.str("spec");
        try {
            return parse_description(text);
        } catch (const std::invalid_argument& e) {
            throw io::FormatError(std::string("field 'spec': ") + e.what());
        }
    }();
    const auto count = r.u64("parameter count");
    if (count > 4096) throw io::FormatError("implausible parameter count " + std::to_string(count));
    std::vector<Parameter> params;
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::string field = "param[" + std::to_string(i) + "]";
        Parameter p;
        p.name = r.str(field + ".name");
        p.layer = 0;
        p.value = r.tensor(field + ".value");
        params.push_back(std::move(p));
    }
    r.expect_end("network checkpoint");
    try {
        return Network::assemble(std::move(input), std::move(layers), std::move(params));
    } catch (const std::invalid_argument& e) {
        throw io::FormatError(std::string("network checkpoint: ") + e.what());
    }
}

void save_network(const Network& net, const std::string& path) { io::write_file_atomic(path, serialize_network(net)); }

Network load_network(const std::string& path) { return deserialize_network(io::read_file(path)); }

std::uint64_t network_hash(const Network& net) { return io::fnv1a(serialize_network(net)); }

}  // namespace ganmex::nn
