#include "temba/cli.hpp"

int main(int argc, char** argv) { return temba::cli::dispatch(argc, argv); }
