#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "spconv/sparsity.hpp"

using namespace spconv;

TEST_CASE("relu basics") {
    plain_tensor t(1, 1, 1, 3);
    t.data = {-1.0f, 0.0f, 3.0f};
    const plain_tensor r = relu(t);
    CHECK(r.data == std::vector<float>{0.0f, 0.0f, 3.0f});

    plain_tensor neg(1, 1, 2, 2);
    neg.data = {-1, -2, -3, -4};
    for (float v : relu(neg).data) CHECK(v == 0.0f);
}

TEST_CASE("relu is idempotent and never reduces sparsity") {
    const plain_tensor t = gen_gaussian_relu(2, 3, 10, 10, 5);
    const plain_tensor r = relu(t);
    CHECK(relu(r).data == r.data);
    CHECK(measure_sparsity(r) >= measure_sparsity(t));
}

TEST_CASE("gaussian relu lands near 50% sparsity") {
    // 10^5 elements; a centered distribution clamps about half
    const plain_tensor t = gen_gaussian_relu(1, 10, 100, 100, 11);
    CHECK(measure_sparsity(t) == doctest::Approx(0.5).epsilon(0.04));
}

TEST_CASE("relu_grad_mask applies the derivative rule") {
    plain_tensor pre(1, 1, 1, 3), up(1, 1, 1, 3);
    pre.data = {-1.0f, 2.0f, 0.0f};
    up.data = {5.0f, 5.0f, 5.0f};
    const plain_tensor g = relu_grad_mask(pre, up);
    CHECK(g.data == std::vector<float>{0.0f, 5.0f, 0.0f});

    // all-positive pre-activation passes upstream through
    plain_tensor pos(1, 1, 1, 3);
    pos.data = {1.0f, 2.0f, 3.0f};
    CHECK(relu_grad_mask(pos, up).data == up.data);

    // elementwise oracle on random data
    const plain_tensor rp = gen_gaussian_relu(1, 2, 20, 20, 3);
    const plain_tensor ru = gen_sparse(1, 2, 20, 20, 0.4, 4);
    const plain_tensor rg = relu_grad_mask(rp, ru);
    for (std::size_t e = 0; e < rg.size(); ++e)
        CHECK(rg.data[e] == (rp.data[e] > 0.0f ? ru.data[e] : 0.0f));

    plain_tensor wrong(1, 1, 1, 4);
    CHECK_THROWS_AS(relu_grad_mask(pre, wrong), error);
}

TEST_CASE("gen_sparse hits the requested sparsity") {
    for (float v : gen_sparse(1, 1, 4, 4, 1.0, 1).data) CHECK(v == 0.0f);
    CHECK(measure_sparsity(gen_sparse(1, 1, 8, 8, 0.0, 2)) == 0.0);
    const plain_tensor t = gen_sparse(1, 10, 100, 100, 0.8, 3);
    CHECK(measure_sparsity(t) == doctest::Approx(0.8).epsilon(0.0125));
    // non-zeros stay in [0.1, 1.0]
    for (float v : t.data)
        if (v != 0.0f) {
            CHECK(v >= 0.1f);
            CHECK(v <= 1.0f);
        }
    // deterministic per seed
    CHECK(gen_sparse(2, 2, 5, 5, 0.5, 9).data
          == gen_sparse(2, 2, 5, 5, 0.5, 9).data);
    CHECK(gen_sparse(2, 2, 5, 5, 0.5, 9).data
          != gen_sparse(2, 2, 5, 5, 0.5, 10).data);
    CHECK_THROWS_AS(gen_sparse(1, 1, 2, 2, 1.5, 1), error);
}

TEST_CASE("measure_sparsity counts exact zeros") {
    plain_tensor t(1, 1, 2, 2);
    t.data = {0.0f, 0.0f, 1.0f, 2.0f};
    CHECK(measure_sparsity(t) == 0.5);
    t.data = {0.0f, -0.0f, 0.0f, 0.0f};
    CHECK(measure_sparsity(t) == 1.0);
    const plain_tensor g = gen_sparse(1, 4, 50, 50, 0.3, 8);
    CHECK(measure_sparsity(g) == doctest::Approx(0.3).epsilon(0.05));
}

namespace {

std::filesystem::path write_temp(const std::string& name,
                                 const std::string& body) {
    const auto dir =
        std::filesystem::temp_directory_path() / "spconv_profile_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / name;
    std::ofstream out(path, std::ios::trunc);
    out << body;
    return path;
}

} // namespace

TEST_CASE("profile parsing") {
    {
        const auto p =
            write_temp("empty.csv", "network,layer,epoch,source,sparsity\n");
        const sparsity_profile prof = load_profile(p.string());
        CHECK(prof.entries.empty());
        CHECK(prof.max_epoch() == -1);
    }
    {
        const auto p = write_temp(
            "one.csv", "network,layer,epoch,source,sparsity\n"
                       "resnet50,resnet3_2,17,activation,0.63\n");
        const sparsity_profile prof = load_profile(p.string());
        REQUIRE(prof.entries.size() == 1);
        CHECK(prof.network == "resnet50");
        CHECK(prof.entries[0].layer == "resnet3_2");
        CHECK(prof.entries[0].epoch == 17);
        CHECK(prof.entries[0].source == sparsity_source::activation);
        CHECK(prof.entries[0].sparsity == doctest::Approx(0.63));
        CHECK(prof.find("resnet3_2", 17, sparsity_source::activation)
              != nullptr);
        CHECK(prof.find("resnet3_2", 18, sparsity_source::activation)
              == nullptr);
    }
    {
        const auto p = write_temp(
            "range.csv", "network,layer,epoch,source,sparsity\n"
                         "net,l1,0,activation,1.2\n");
        try {
            load_profile(p.string());
            CHECK(false);
        } catch (const error& e) {
            // the error names the offending line
            CHECK(std::string(e.what()).find(":2") != std::string::npos);
        }
    }
    {
        const auto p = write_temp(
            "dup.csv", "network,layer,epoch,source,sparsity\n"
                       "net,l1,0,activation,0.5\n"
                       "net,l1,0,activation,0.6\n");
        CHECK_THROWS_AS(load_profile(p.string()), error);
    }
    {
        const auto p = write_temp("hdr.csv", "wrong,header\n");
        CHECK_THROWS_AS(load_profile(p.string()), error);
    }
    {
        const auto p = write_temp(
            "src.csv", "network,layer,epoch,source,sparsity\n"
                       "net,l1,0,weights,0.5\n");
        CHECK_THROWS_AS(load_profile(p.string()), error);
    }
}

TEST_CASE("profile save/load round-trip") {
    sparsity_profile prof;
    prof.network = "toy";
    prof.entries = {
        {"l1", 0, sparsity_source::activation, 0.5},
        {"l1", 0, sparsity_source::output_grad, 0.25},
        {"l2", 1, sparsity_source::activation, 0.875},
    };
    const auto p = std::filesystem::temp_directory_path()
                   / "spconv_profile_test" / "rt.csv";
    std::filesystem::create_directories(p.parent_path());
    save_profile(prof, p.string());
    const sparsity_profile back = load_profile(p.string());
    REQUIRE(back.entries.size() == 3);
    CHECK(back.network == "toy");
    CHECK(back.max_epoch() == 1);
    CHECK(back.entries[2].sparsity == doctest::Approx(0.875));
}
