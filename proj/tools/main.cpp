#include <vector>

#include "sraseg/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return sraseg::cli::dispatch(args);
}
