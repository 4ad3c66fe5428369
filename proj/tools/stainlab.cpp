#include <string>
#include <vector>

#include "stainlab/cli.hpp"

int main(int argc, char** argv) {
    stainlab::cli::configure_logging_from_env();
    return stainlab::cli::dispatch(std::vector<std::string>(argv, argv + argc));
}
