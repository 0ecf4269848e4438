#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace tsgps {

/// Incremental SHA-256 (FIPS 180-4), used for checkpoint integrity.
class Sha256 {
public:
    Sha256() { reset(); }

    void reset();
    void update(const void* data, std::size_t len);
    std::array<std::uint8_t, 32> digest(); // finalizes; call once

    static std::string hex(const std::array<std::uint8_t, 32>& d);

private:
    void process_block(const std::uint8_t* block);

    std::array<std::uint32_t, 8> state_{};
    std::array<std::uint8_t, 64> buffer_{};
    std::size_t buffered_ = 0;
    std::uint64_t total_bits_ = 0;
};

} // namespace tsgps
