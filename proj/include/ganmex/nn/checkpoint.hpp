#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "ganmex/nn/network.hpp"

namespace ganmex::nn {

/// Checkpoint container: magic "GMXNET1", the architecture description as a
/// length-prefixed string, then each parameter as (name, shape, raw little-endian f64).
inline constexpr std::string_view kNetworkMagic = "GMXNET1";

std::string serialize_network(const Network& net);
Network deserialize_network(std::string_view bytes);

void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

/// Hash of the serialized checkpoint; identifies a classifier bit-exactly.
std::uint64_t network_hash(const Network& net);

}  // namespace ganmex::nn
