#include "simeck/cipher.hpp"

#include <stdexcept>
#include <string>

namespace simeck {

namespace {

// Period-31 m-sequence for SIMECK32/64, consumed LSB first.
constexpr std::uint32_t kZSequence = 0x9A42BB1F;
constexpr Word kRoundConstant = 0xFFFC;

}  // namespace

RoundKeys expand_key(const MasterKey& mk, unsigned rounds)
{
    if (rounds > kFullRounds)
        throw std::invalid_argument("expand_key: at most 32 rounds, got " + std::to_string(rounds));

    Word t2 = mk.words[0], t1 = mk.words[1], t0 = mk.words[2], k0 = mk.words[3];
    RoundKeys rk;
    for (unsigned i = 0; i < rounds; ++i) {
        rk.push_back(k0);
        const Word z = static_cast<Word>((kZSequence >> i) & 1U);
        const Word fresh = static_cast<Word>(k0 ^ round_function(t0) ^ kRoundConstant ^ z);
        k0 = t0;
        t0 = t1;
        t1 = t2;
        t2 = fresh;
    }
    return rk;
}

}  // namespace simeck
