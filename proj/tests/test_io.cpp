#include <filesystem>
#include <vector>

#include "test_util.hpp"
#include "vord/io.hpp"

using namespace vord;
using nlohmann::json;

TEST_SUITE("io") {

TEST_CASE("config defaults and overrides") {
  const auto c = parse_experiment_config(json::object());
  CHECK(c.seed == 0);
  CHECK(c.decode.beta == 0.2);
  CHECK(c.decode.margin.adaptive);
  CHECK(c.corruption.kind == CorruptionKind::kMixup);
  CHECK(c.corruption.alpha == 1.0);
  CHECK(c.loss.psi == 2.0);
  CHECK(c.learning_rate == 1e-5);
  CHECK(c.num_bins == 15);
  CHECK(c.ablation_corruptions.size() == 5);

  const auto o = parse_experiment_config(json::parse(R"({
    "seed": 9,
    "decode": {"beta": 0.5, "margin": 0.25, "strategy": "greedy"},
    "corruption": {"kind": "diffusion", "gamma": 0.3},
    "loss": {"psi": 1, "reduction": "sum"},
    "ablation": {"margins": [0.1]}
  })"));
  CHECK(o.seed == 9);
  CHECK(o.decode.beta == 0.5);
  CHECK_FALSE(o.decode.margin.adaptive);
  CHECK(o.decode.margin.fixed == 0.25);
  CHECK(o.decode.strategy.kind == SamplingStrategy::Kind::kGreedy);
  CHECK(o.corruption.kind == CorruptionKind::kDiffusion);
  CHECK(o.loss.reduction == Reduction::kSum);
  CHECK(o.ablation_margins == std::vector<double>{0.1});

  // Serializing and parsing again gives the same document.
  CHECK(to_json(parse_experiment_config(to_json(o))) == to_json(o));
}

TEST_CASE("config rejects unknown keys and bad values") {
  CHECK_VORD_CODE(parse_experiment_config(json::parse(R"({"sed": 1})")), "invalid-config");
  CHECK_VORD_CODE(parse_experiment_config(json::parse(R"({"decode": {"bet": 1}})")),
                  "invalid-config");
  CHECK_VORD_CODE(parse_experiment_config(json::parse(R"({"decode": {"beta": 2}})")),
                  "invalid-config");
  CHECK_VORD_CODE(parse_experiment_config(json::parse(R"({"decode": {"beta": "x"}})")),
                  "invalid-config");
  CHECK_VORD_CODE(parse_experiment_config(json::parse(R"({"loss": {"psi": 3}})")),
                  "invalid-config");
  CHECK_VORD_CODE(parse_experiment_config(json::parse(R"({"corruption": {"kind": "blur"}})")),
                  "unknown-corruption");
  CHECK_VORD_CODE(parse_experiment_config(json::parse(R"({"corruption": {"alpha": 0}})")),
                  "invalid-corruption");
}

TEST_CASE("PPM round trip") {
  std::vector<float> px(4 * 3 * 3);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<float>(i % 256) / 255.0f;
  const ImageTensor img(4, 3, 3, px);
  const auto bytes = encode_ppm(img);
  CHECK(bytes.rfind("P6\n3 4\n255\n", 0) == 0);
  const auto back = decode_ppm(bytes);
  CHECK(back.same_shape(img));
  for (std::size_t i = 0; i < px.size(); ++i) {
    CHECK(std::abs(back.data()[i] - img.data()[i]) <= 0.5f / 255.0f + 1e-6f);
  }
  const auto gray = decode_ppm(encode_ppm(ImageTensor(2, 2, 1, 0.5f)));
  CHECK(gray.channels() == 3);
  CHECK_VORD_CODE(decode_ppm("P5\n1 1\n255\n\0"), "bad-ppm");
  CHECK_VORD_CODE(decode_ppm("P6\n2 2\n255\nabc"), "bad-ppm");
}

TEST_CASE("model file round trip") {
  const std::vector<double> theta{0.5, -1.25, 3.0e-3, 0.0};
  const auto bytes = encode_model(theta);
  CHECK(bytes.substr(0, 4) == "VLM1");
  CHECK(bytes.size() == 4 + 8 + 4 * theta.size());
  CHECK(static_cast<unsigned char>(bytes[4]) == 4);
  const auto back = decode_model(bytes);
  REQUIRE(back.size() == theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    CHECK(back[i] == static_cast<double>(static_cast<float>(theta[i])));
  }
  CHECK_VORD_CODE(decode_model("VLM2"), "bad-model");
  CHECK_VORD_CODE(decode_model(bytes.substr(0, bytes.size() - 1)), "bad-model");
}

TEST_CASE("atomic writes and image reading") {
  const auto dir = std::filesystem::temp_directory_path() / "vord_io_test";
  std::filesystem::remove_all(dir);
  const ImageTensor img(2, 2, 2, 0.25f);
  write_file_atomic(dir / "nested" / "a.vten", encode_vten(img));
  CHECK(read_image(dir / "nested" / "a.vten") == img);
  write_file_atomic(dir / "a.ppm", encode_ppm(ImageTensor(2, 2, 3, 1.0f)));
  CHECK(read_image(dir / "a.ppm").channels() == 3);
  write_file_atomic(dir / "junk", "hello");
  CHECK_VORD_CODE(read_image(dir / "junk"), "bad-image");
  CHECK_VORD_CODE(read_file(dir / "missing"), "io-error");
  std::size_t leftovers = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    leftovers += e.path().filename().string().find(".tmp") != std::string::npos;
  }
  CHECK(leftovers == 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("csv formatting") {
  EpochRecord r;
  r.epoch = 1;
  r.ce_loss = 0.5;
  const auto csv = loss_curve_csv({r});
  CHECK(csv.find("0.500000") != std::string::npos);
  CHECK(csv.find('\n') != std::string::npos);
}

}  // TEST_SUITE
