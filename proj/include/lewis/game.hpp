#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "lewis/narray.hpp"
#include "lewis/rng.hpp"

namespace lewis {

struct GameConfig {
    int K = 4;  // attributes per object
    int V = 4;  // values per attribute
    int W = 10; // sampled-token vocabulary; EoS sits outside it
    int T = 5;  // sampled tokens per message, before the fixed EoS
    double split_fraction = 0.8;
    std::int64_t enumeration_cap = 1000000;

    void validate() const;
    int object_dim() const { return K * V; }
    // V^K; throws past enumeration_cap with a pointer at sampling mode.
    std::int64_t space_size() const;

    int eos_token() const { return W; }
    int start_token() const { return W + 1; }
    int speaker_vocab() const { return W + 2; }   // tokens + EoS + start
    int listener_vocab() const { return W + 1; }  // tokens + EoS
};

// K attribute values, each in [0, V).
using ObjectInstance = std::vector<int>;

// T sampled tokens followed by the EoS marker at position T.
struct Message {
    std::vector<std::int32_t> tokens;
};

bool is_valid_object(const ObjectInstance& v, const GameConfig& cfg);
bool is_valid_message(const Message& m, const GameConfig& cfg);

struct DatasetSplit {
    std::vector<ObjectInstance> train;
    std::vector<ObjectInstance> test;
};

// Enumerates all of V^K, shuffles uniformly with the given generator, and
// takes the first round(split_fraction * total) objects as train.
DatasetSplit enumerate_and_split(const GameConfig& cfg, Rng rng);

// [K*V]: K one-hot blocks of width V concatenated.
NArray one_hot(const ObjectInstance& v, const GameConfig& cfg);
// [B, K*V], one object per row.
NArray one_hot_rows(const std::vector<ObjectInstance>& objs, const GameConfig& cfg);
// Argmax per block; exact inverse of one_hot on valid encodings.
ObjectInstance decode_one_hot(const NArray& row, const GameConfig& cfg);

// One object per row: K attribute columns, then a split column {train,test}.
void dump_dataset_csv(const DatasetSplit& split, const GameConfig& cfg, std::ostream& out);

}  // namespace lewis
