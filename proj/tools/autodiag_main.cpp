#include <vector>

#include "autodiag/cli.hpp"

int main(int argc, char** argv) {
    return autodiag::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
