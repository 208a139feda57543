#include <catch2/catch_amalgamated.hpp>

#include "chad/bigstack.hpp"

int main(int argc, char** argv) {
  return chad::run_on_big_stack([&] { return Catch::Session().run(argc, argv); });
}
