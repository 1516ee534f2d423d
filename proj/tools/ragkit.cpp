#include "ragkit/cli.hpp"

int main(int argc, char** argv) { return ragkit::cli::dispatch(argc, argv); }
