#include "adctl/cli.hpp"

int main(int argc, char** argv) { return adctl::cli::dispatch(argc, argv); }
