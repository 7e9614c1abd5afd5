#include <doctest.h>

#include <array>
#include <stdexcept>
#include <vector>

#include "simeck/cipher.hpp"
#include "simeck/rng.hpp"

using namespace simeck;

namespace {

// Straight-from-definition reference: words k[i+4] = k[i] ^ f(k[i+1]) ^ c ^ z_i.
std::vector<Word> reference_schedule(std::array<Word, 4> mk, unsigned rounds)
{
    const std::uint32_t z = 0x9A42BB1F;
    std::vector<Word> w{mk[3], mk[2], mk[1], mk[0]};
    for (unsigned i = 0; w.size() < rounds; ++i) {
        const Word t = w[i + 1];
        const Word ft = static_cast<Word>((((t << 5) | (t >> 11)) & t) ^ ((t << 1) | (t >> 15)));
        w.push_back(static_cast<Word>(w[i] ^ ft ^ 0xFFFC ^ ((z >> (i % 32)) & 1)));
    }
    w.resize(rounds);
    return w;
}

}  // namespace

TEST_CASE("published test vector")
{
    const auto rk = expand_key(MasterKey{{0x1918, 0x1110, 0x0908, 0x0100}}, 32);
    const State c = encrypt(State{0x6565, 0x6877}, rk);
    CHECK(c.x == 0x770D);
    CHECK(c.y == 0x2C76);
    CHECK(decrypt(c, rk) == State{0x6565, 0x6877});
}

TEST_CASE("key schedule agrees with the recurrence")
{
    Rng rng(11);
    for (int t = 0; t < 200; ++t) {
        const auto mk = rng.master_key();
        const auto rk = expand_key(mk, 32);
        const auto ref = reference_schedule(mk.words, 32);
        for (unsigned i = 0; i < 32; ++i)
            REQUIRE(rk[i] == ref[i]);
    }
    CHECK_THROWS_AS(expand_key(MasterKey{}, 33), std::invalid_argument);
}

TEST_CASE("round function and inverse")
{
    CHECK(round_function(0) == 0);
    CHECK(round_function(0x0001) == 0x0002);
    Rng rng(3);
    for (int t = 0; t < 10000; ++t) {
        const State s = rng.state();
        const Word k = rng.word();
        REQUIRE(round_backward(round_forward(s, k), k) == s);
    }
}

TEST_CASE("random round trips at every length")
{
    Rng rng(5);
    for (int t = 0; t < 20000; ++t) {
        const unsigned r = 1 + static_cast<unsigned>(rng.below(32));
        const auto rk = expand_key(rng.master_key(), r);
        const State p = rng.state();
        REQUIRE(decrypt(encrypt(p, rk), rk) == p);
    }
}

TEST_CASE("xor differences")
{
    const State a{0x1234, 0xabcd}, b{0x0f0f, 0xffff};
    const StateDiff d = a ^ b;
    CHECK((a ^ d) == b);
    CHECK(StateDiff::unpack(d.packed()) == d);
}
