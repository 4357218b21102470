"""Shared fixtures: a small social world and helpers to join it."""

from __future__ import annotations

import pytest

from peershare.model import AppIdentity, SocialIdentity
from peershare.provider import MockProvider
from peershare.server import PeerShareServer, ProviderBinding

APP_ID = "peershare-app"
NETWORK = "mocknet"

PEERSENSE = AppIdentity("android", "com.example.peersense:a1b2")
SCAMPI_APP = AppIdentity("android", "com.example.scampi:c3d4")


@pytest.fixture
def provider():
    return MockProvider(network=NETWORK)


@pytest.fixture
def server(provider):
    return PeerShareServer(bindings=[ProviderBinding(NETWORK, APP_ID, provider)])


class Actor:
    """One registered user: identity, token and peershare id in one place."""

    def __init__(self, provider, server, social_id: str, name: str = ""):
        self.provider = provider
        self.server = server
        self.social_id = social_id
        self.identity = SocialIdentity(NETWORK, social_id, name or social_id.title())
        self.token = provider.issue_token(social_id, APP_ID).token
        response = server.register(self.token, self.identity)
        assert response["status"] == "ok", response
        self.peershare_id = response["peershare_id"]

    def download_values(self) -> set[str]:
        response = self.server.download(self.token, self.peershare_id)
        assert response["status"] == "ok", response
        return {item["data_value"] for item in response["items"]}


@pytest.fixture
def make_actor(provider, server):
    def factory(social_id: str, name: str = "", friends: tuple[str, ...] = ()) -> Actor:
        if social_id not in provider.raw_state()["users"]:
            provider.add_user(social_id, name or social_id.title())
        for friend in friends:
            if friend not in provider.raw_state()["users"]:
                provider.add_user(friend, friend.title())
            provider.add_friendship(social_id, friend)
        return Actor(provider, server, social_id, name)

    return factory
