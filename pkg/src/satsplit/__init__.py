"""TLS splitting and encrypted broadcast caching over satellite, simulated.

Modules mirror the architecture: a deterministic event engine (`sim`),
the fixed role topology (`topology`), three handshake paths (`handshake`),
the key-delegation channel (`keyless`), pinning-record resolution (`dane`),
the aes128gcm record codec (`ece`), broadcast-fed caching (`cachecast`),
and the scenario runner plus CLI (`scenarios`, `cli`).
"""

__version__ = "0.1.0"
