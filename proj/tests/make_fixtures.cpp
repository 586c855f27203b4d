// Regenerates tests/fixtures. Run from the repository root after a format
// or model change, then review the diff of gam_golden.txt.
#include <cstdio>
#include <fstream>

#include "granlab/checkpoint.hpp"
#include "granlab/gam.hpp"
#include "granlab/presets.hpp"
#include "granlab/trainer.hpp"
#include "test_models.hpp"

using namespace granlab;
using namespace granlab::testing;

int main(int argc, char** argv) {
  const std::string dir = argc > 1 ? argv[1] : "tests/fixtures";
  const auto [train_set, test_set] = fixture_ring<float>();
  for (std::size_t steps : {1, 3}) {
    auto gen = GranGenerator<float>::init(fixture_config(steps), 100 + steps);
    auto disc = Discriminator<float>::init(fixture_disc_config(), 200 + steps);
    TrainConfig tc;
    tc.iterations = 300;
    tc.seed = steps;
    tc.lr_g = 1e-3;
    tc.lr_d = 1e-3;
    train(gen, disc, train_set.x, tc);
    const std::string path = dir + "/gran" + std::to_string(steps) + ".grn";
    save_checkpoint(path, gen, disc);
    std::printf("wrote %s\n", path.c_str());
  }

  auto m1 = load_checkpoint<double>(dir + "/gran1.grn");
  auto m3 = load_checkpoint<double>(dir + "/gran3.grn");
  const auto [tr, te] = fixture_ring<double>();
  const auto report = battle<double>({m1.gen, m1.disc, "GRAN1"}, {m3.gen, m3.disc, "GRAN3"},
                                     tr.x, te.x, 400, 5);
  std::ofstream(dir + "/gam_golden.txt") << report_kv(report, judge(report)).serialize();
  std::printf("wrote %s/gam_golden.txt\n", dir.c_str());

  // What `granlab battle gran1.grn gran3.grn --dataset ring` must print:
  // float models, the standard ring split, n = test size, seed 0.
  auto f1 = load_checkpoint<float>(dir + "/gran1.grn");
  auto f3 = load_checkpoint<float>(dir + "/gran3.grn");
  const auto ring = load_dataset<float>(DatasetSpec::parse("ring"), kDefaultDataSeed);
  const auto cli_report = battle<float>({f1.gen, f1.disc, "gran1"}, {f3.gen, f3.disc, "gran3"},
                                        ring.train.x, ring.test.x, ring.test.size(), 0);
  std::ofstream(dir + "/cli_battle_golden.txt")
      << report_kv(cli_report, judge(cli_report)).serialize();
  std::printf("wrote %s/cli_battle_golden.txt\n", dir.c_str());
}
