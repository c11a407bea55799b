from __future__ import annotations

from llmgrade.gateway import MockTransport, ModelGateway, ResponseCache


def make_gateway(rules_or_transport, cache_dir=None, **kw):
    transport = rules_or_transport if isinstance(rules_or_transport, MockTransport) else MockTransport(rules_or_transport)
    cache = ResponseCache(cache_dir) if cache_dir is not None else None
    kw.setdefault("sleep", lambda s: None)
    return ModelGateway(cache, transport, **kw)
