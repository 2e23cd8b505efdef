#include "doctest.h"

#include <cstdio>
#include <fstream>

#include "ngcnn/error.hpp"
#include "ngcnn/manifest.hpp"

using namespace ngcnn;

TEST_CASE("sha256 known answers")
{
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("manifest records inputs, flags and seeds")
{
    const std::string path = "manifest_test_input.txt";
    {
        std::ofstream out(path, std::ios::binary);
        out << "abc";
    }
    RunManifest m("train");
    m.flag("epochs", 3);
    m.seed("split", 99);
    m.input(path);
    m.output("model.ngc");
    const auto j = m.to_json();
    CHECK(j.at("command") == "train");
    CHECK(j.at("flags").at("epochs") == 3);
    CHECK(j.at("seeds").at("split") == 99);
    CHECK(j.at("inputs")[0].at("sha256") == sha256_hex("abc"));
    CHECK(j.at("version") == std::string(kToolVersion));
    CHECK(j.at("duration_seconds").get<double>() >= 0.0);
    std::remove(path.c_str());

    CHECK_THROWS_AS(m.input("does/not/exist"), InputError);
}
