// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "gpn/checkpoint.hpp"
#include "gpn/rng.hpp"

using namespace gpn;

TEST_CASE("checkpoint round-trip is bitwise exact") {
    ParamRegistry reg;
    Rng rng(8);
    Parameter* a = reg.add("enc.w_proj", {16, 8});
    Parameter* b = reg.add("jqag.word_emb", {10, 4});
    Parameter* c = reg.add("pt.b_al1", {4});
    for (Parameter* p : {a, b, c}) rng.fill_uniform(p->value, -3, 3);
    // include values that stress exact float encoding
    a->value[0] = 1.0 / 3.0;
    a->value[1] = -0.0;
    a->value[2] = 1e-308;

    std::string path = "test_ckpt.gpn";
    save_checkpoint(path, reg.all(), {{"purpose", "test"}, {"step", 12}});

    Checkpoint ck = load_checkpoint(path);
    CHECK(ck.meta["purpose"] == "test");
    CHECK(ck.tensors.size() == 3);
    for (Parameter* p : reg.all()) {
        const CheckpointTensor* t = ck.find(p->name);
        REQUIRE(t != nullptr);
        CHECK(t->shape == p->shape);
        CHECK(t->data == p->value);  // exact bit pattern
    }

    // applying onto a same-shaped registry reproduces the values
    ParamRegistry reg2;
    reg2.add("enc.w_proj", {16, 8});
    reg2.add("jqag.word_emb", {10, 4});
    reg2.add("pt.b_al1", {4});
    apply_checkpoint(ck, reg2);
    CHECK(reg2.find("enc.w_proj")->value == a->value);

    // byte-identical re-encode
    std::string blob1 = encode_checkpoint(reg.all(), {{"purpose", "test"}, {"step", 12}});
    std::string blob2 = encode_checkpoint(reg2.all(), {{"purpose", "test"}, {"step", 12}});
    CHECK(blob1 == blob2);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint validation errors") {
    CHECK_THROWS(decode_checkpoint("BAD!"));

    ParamRegistry reg;
    reg.add("w", {2, 2});
    std::string blob = encode_checkpoint(reg.all(), {});
    Checkpoint ck = decode_checkpoint(blob);

    ParamRegistry wrong_shape;
    wrong_shape.add("w", {4, 2});
    CHECK_THROWS(apply_checkpoint(ck, wrong_shape));

    ParamRegistry missing;
    missing.add("w", {2, 2});
    missing.add("extra", {1});
    CHECK_THROWS(apply_checkpoint(ck, missing));

    // truncated data section
    std::string cut = blob.substr(0, blob.size() - 8);
    CHECK_THROWS(decode_checkpoint(cut));
}

TEST_CASE("magic string is GPN1") {
    ParamRegistry reg;
    reg.add("w", {1});
    std::string blob = encode_checkpoint(reg.all(), {});
    CHECK(blob.compare(0, 4, "GPN1") == 0);
}
