"""Operator and test-harness command line.

Two ways to run things: a networked deployment (`serve`, `provider`,
`agent serve`, `bench`) and a file-backed world (`--world DIR`) where
every invocation opens the shared stores in-process, performs one
operation and exits.  The world mode is what the headless scenario
scripts drive.
"""

from __future__ import annotations

import argparse
import base64
import json
import os
import sys
import tempfile
import threading

from . import bench as bench_mod
from . import protocol
from .agent import (
    AgentError,
    AppAclDeniedError,
    NotFoundError,
    NotLoggedInError,
    PeerShareAgent,
    ValidationFailed,
)
from .certs import generate_self_signed
from .channel import ChannelError
from .datatypes import make_bdaddr_binding
from .httpd import ServerApp, StoreLockedError, write_inspect
from .ipc import AgentIpcClient, AgentIpcServer
from .model import (
    AppData,
    AppIdentity,
    BindingType,
    DataDescriptor,
    Sensitivity,
    SharingPolicy,
    SocialIdentity,
    Specificity,
)
from .provider import MockProvider, ProviderError
from .provider_http import HttpProviderClient, ProviderApp
from .server import PeerShareServer, ProviderBinding
from .transport import HttpTransport, InProcessTransport, TransportError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_ACL = 4
EXIT_NOT_FOUND = 5
EXIT_AUTH = 6
EXIT_TRANSPORT = 7


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_ERROR):
        super().__init__(message)
        self.code = code


# -- world plumbing -----------------------------------------------------------


class World:
    """File-backed in-process deployment shared by consecutive invocations."""

    def __init__(self, root: str):
        self.root = root
        os.makedirs(root, exist_ok=True)
        config_path = os.path.join(root, "world.json")
        if os.path.exists(config_path):
            with open(config_path, encoding="utf-8") as fh:
                self.config = json.load(fh)
        else:
            self.config = {"network": "mocknet", "app_id": "peershare-app"}
            with open(config_path, "w", encoding="utf-8") as fh:
                json.dump(self.config, fh)
        self.provider = MockProvider(
            network=self.config["network"], state_path=os.path.join(root, "provider.json")
        )
        self._server: PeerShareServer | None = None

    @property
    def server(self) -> PeerShareServer:
        if self._server is None:
            self._server = PeerShareServer(
                store_path=os.path.join(self.root, "server.sqlite"),
                bindings=[
                    ProviderBinding(self.config["network"], self.config["app_id"], self.provider)
                ],
            )
        return self._server

    def agent_for(self, user: str) -> PeerShareAgent:
        data_dir = os.path.join(self.root, "agents", user)
        return PeerShareAgent(
            data_dir=data_dir,
            provider=self.provider,
            transport=InProcessTransport(self.server),
            app_id=self.config["app_id"],
        )


def _graph_backend(args):
    if args.world:
        return World(args.world).provider
    if args.provider_url:
        return HttpProviderClient(args.provider_url)
    raise CliError("graph needs --world or --provider-url", EXIT_USAGE)


def _emit(args, payload: dict, text: str) -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    elif text:
        print(text)


# -- subcommand implementations ----------------------------------------------


def cmd_graph(args) -> int:
    provider = _graph_backend(args)
    command = {"op": args.graph_op}
    if args.graph_op == "add_user":
        command.update(social_id=args.a, display_name=args.b or args.a)
    elif args.graph_op in ("add_friendship", "remove_friendship"):
        command.update(a=args.a, b=args.b)
    elif args.graph_op == "create_list":
        command.update(owner=args.a, list_id=args.b, display_name=args.display_name or args.b)
    elif args.graph_op == "delete_list":
        command.update(list_id=args.a)
    elif args.graph_op in ("add_to_list", "remove_from_list"):
        command.update(list_id=args.a, social_id=args.b)
    elif args.graph_op == "show":
        if not isinstance(provider, MockProvider):
            raise CliError("graph show needs --world", EXIT_USAGE)
        state = provider.raw_state()
        print(
            json.dumps(
                {
                    "users": state["users"],
                    "friends": {u: sorted(v) for u, v in state["friends"].items()},
                    "lists": {
                        lid: {
                            "owner": l["owner"],
                            "display_name": l["display_name"],
                            "members": sorted(l["members"]),
                        }
                        for lid, l in state["lists"].items()
                    },
                },
                indent=2,
                sort_keys=True,
            )
        )
        return EXIT_OK
    try:
        result = provider.mutate_graph(command)
    except ProviderError as exc:
        raise CliError(f"graph: {exc}", EXIT_VALIDATION) from None
    _emit(args, result, "ok")
    return EXIT_OK


def _world_agent(args) -> PeerShareAgent:
    if args.data_dir and args.server_url:
        # Networked one-shot mode: open the agent store, talk to a live server.
        provider = (
            HttpProviderClient(args.provider_url, network=args.network)
            if args.provider_url
            else None
        )
        if provider is None:
            raise CliError("networked agent needs --provider-url", EXIT_USAGE)
        try:
            transport = HttpTransport(
                args.server_url, pin_path=args.pin, allow_plaintext=args.allow_plaintext
            )
        except ChannelError as exc:
            raise CliError(str(exc), EXIT_TRANSPORT) from None
        return PeerShareAgent(
            data_dir=args.data_dir, provider=provider, transport=transport, app_id=args.app_id
        )
    if not args.world or not args.user:
        raise CliError("agent command needs --world and --user (or --data-dir/--server-url)",
                       EXIT_USAGE)
    return World(args.world).agent_for(args.user)


def cmd_agent(args) -> int:
    if args.agent_op == "serve":
        return _agent_serve(args)
    agent = _world_agent(args)
    if args.agent_op == "login":
        peershare_id = agent.login(args.user, args.display_name or args.user)
        _emit(
            args,
            {"status": "ok", "peershare_id": peershare_id},
            f"logged in as {args.user}@{agent.provider.network} peershare_id={peershare_id}",
        )
        return EXIT_OK
    if not agent.restore():
        raise CliError(f"agent for {args.user} is not logged in", EXIT_AUTH)
    if args.agent_op == "refresh":
        summary = agent.refresh()
        _emit(
            args,
            {
                "status": "ok",
                "uploaded": summary.uploaded,
                "updated": summary.updated,
                "deleted": summary.deleted,
                "fetched": summary.fetched,
                "purged": summary.purged,
                "errors": summary.errors,
            },
            f"refresh uploaded={summary.uploaded} updated={summary.updated} "
            f"deleted={summary.deleted} fetched={summary.fetched} purged={summary.purged}",
        )
        return EXIT_OK if not summary.errors else EXIT_ERROR
    if args.agent_op == "status":
        identity, peershare_id = agent.get_my_social_data(AppIdentity("cli", "peershare-cli:0"))
        _emit(
            args,
            {
                "status": "ok",
                "identity": protocol.identity_to_wire(identity),
                "peershare_id": peershare_id,
            },
            f"{identity.social_id}@{identity.network} peershare_id={peershare_id}",
        )
        return EXIT_OK
    if args.agent_op == "unregister":
        agent.unregister()
        _emit(args, {"status": "ok"}, "unregistered")
        return EXIT_OK
    if args.agent_op == "policy":
        if args.object_id is None or not args.policy:
            raise CliError("agent policy needs --object-id and --policy", EXIT_USAGE)
        policy = _parse_policy(args.policy)
        agent.override_policy(args.object_id, policy)
        _emit(args, {"status": "ok"}, "ok")
        return EXIT_OK
    raise CliError(f"unknown agent operation {args.agent_op}", EXIT_USAGE)


def _agent_serve(args) -> int:
    if not args.data_dir or not args.socket:
        raise CliError("agent serve needs --data-dir and --socket", EXIT_USAGE)
    if args.provider_url:
        provider = HttpProviderClient(args.provider_url, network=args.network)
    else:
        raise CliError("agent serve needs --provider-url", EXIT_USAGE)
    if not args.server_url:
        raise CliError("agent serve needs --server-url", EXIT_USAGE)
    try:
        transport = HttpTransport(
            args.server_url, pin_path=args.pin, allow_plaintext=args.allow_plaintext
        )
    except ChannelError as exc:
        raise CliError(str(exc), EXIT_TRANSPORT) from None
    agent = PeerShareAgent(
        data_dir=args.data_dir,
        provider=provider,
        transport=transport,
        app_id=args.app_id,
        refresh_interval=args.refresh_interval,
    )
    if args.user:
        agent.login(args.user, args.display_name or args.user)
    elif not agent.restore():
        raise CliError("no previous session; pass --user to log in", EXIT_AUTH)
    ipc = AgentIpcServer(agent, args.socket)
    ipc.start()
    stop = threading.Event()

    def timer_loop() -> None:
        # Missed fires run immediately at start; transport failures back off.
        backoff = 1.0
        while not stop.wait(min(backoff, max(args.refresh_interval / 10, 1.0))):
            try:
                agent.maybe_refresh()
                backoff = args.refresh_interval / 10
            except (TransportError, ChannelError):
                backoff = min(backoff * 2, 300.0)

    thread = threading.Thread(target=timer_loop, daemon=True)
    thread.start()
    print(f"agent listening on {args.socket}", file=sys.stderr)
    try:
        stop.wait()
    except KeyboardInterrupt:
        pass
    finally:
        ipc.stop()
    return EXIT_OK


def _parse_policy(raw: str | None) -> SharingPolicy | None:
    if raw is None:
        return None
    if raw == "all_friends":
        return SharingPolicy.all_friends()
    if raw.startswith("list:"):
        return SharingPolicy.named_list(raw[len("list:"):])
    raise CliError(f"bad policy {raw!r}; use all_friends or list:<id>", EXIT_USAGE)


def _build_app_data(args) -> AppData:
    if args.value_b64:
        try:
            value = base64.b64decode(args.value_b64, validate=True)
        except Exception:
            raise CliError("--value-b64 is not valid base64", EXIT_USAGE) from None
    elif args.value is not None:
        value = args.value.encode("utf-8")
    else:
        raise CliError("provide --value or --value-b64", EXIT_USAGE)
    specificity = Specificity.DEVICE if args.device else Specificity.USER
    descriptor = DataDescriptor(
        data_algorithm=args.algorithm,
        specificity=specificity,
        sensitivity=Sensitivity.PUBLIC if args.public else Sensitivity.PRIVATE,
        binding_type=BindingType.USER_ASSERTED if args.user_asserted else BindingType.OWNER_ASSERTED,
        description=args.description,
    )
    return AppData(
        data_type=args.type,
        data_value=value,
        descriptor=descriptor,
        policy=_parse_policy(args.policy),
        expires_at=args.expires,
        device_id=args.device or "",
    )


class _IpcFacade:
    """Give the IPC client the same call shapes the in-process agent has."""

    def __init__(self, client: AgentIpcClient):
        self._client = client

    def call(self, api: str, caller: AppIdentity, **kwargs) -> dict:
        response = self._client.call(api, caller, **kwargs)
        if response.get("status") != "ok":
            code = response.get("code", "error")
            message = response.get("message", "")
            exit_code = {
                "no_authenticated_user": EXIT_AUTH,
                protocol.NOT_FOUND: EXIT_NOT_FOUND,
                protocol.ACL_DENIED: EXIT_ACL,
                protocol.VALIDATION_ERROR: EXIT_VALIDATION,
            }.get(code, EXIT_ERROR)
            raise CliError(f"{code}: {message}", exit_code)
        return response


def _format_item(entry: dict) -> str:
    data = entry["data"]
    owner = data.get("owner") or {}
    parts = [
        f"[{entry['origin']}]",
        data.get("data_type", "?"),
        f"owner={owner.get('social_id', '?')}",
        f"value={data.get('data_value', '')}",
    ]
    if data.get("device_id"):
        parts.append(f"device={data['device_id']}")
    if entry.get("is_owner"):
        parts.append("mine")
        if entry.get("sync"):
            parts.append(f"sync={entry['sync']}")
    return " ".join(parts)


def cmd_app(args) -> int:
    caller = AppIdentity(args.platform, args.app_id_caller)
    if args.ipc:
        facade = _IpcFacade(AgentIpcClient(args.ipc))
    else:
        agent = _world_agent(args)
        if not agent.restore():
            raise CliError(f"agent for {args.user} is not logged in", EXIT_AUTH)
        facade = _InProcessFacade(agent)

    if args.app_op == "add":
        data = _build_app_data(args)
        response = facade.call("add_data", caller, data=protocol.appdata_to_wire(data))
        _emit(args, response, f"local_id={response['local_id']}")
    elif args.app_op == "update":
        data = _build_app_data(args)
        response = facade.call(
            "update_data", caller, local_id=args.local_id, data=protocol.appdata_to_wire(data)
        )
        _emit(args, response, "ok")
    elif args.app_op == "remove":
        response = facade.call("remove_data", caller, local_id=args.local_id)
        _emit(args, response, "ok")
    elif args.app_op == "list":
        response = facade.call("get_shared_data_detail", caller, data_type=args.type)
        lines = [_format_item(entry) for entry in response["items"]]
        _emit(args, response, "\n".join(lines) if lines else "(no items)")
    elif args.app_op == "my-social":
        response = facade.call("get_my_social_data", caller)
        identity = response["identity"]
        _emit(
            args,
            response,
            f"{identity['social_id']}@{identity['network']} "
            f"peershare_id={response['peershare_id']}",
        )
    elif args.app_op == "policies":
        response = facade.call("get_acl_policies", caller)
        lines = []
        for option in response["policies"]:
            policy = option["sharing_policy"]
            if policy["kind"] == "all_friends":
                lines.append("policy all_friends")
            else:
                lines.append(f"policy list:{policy['list_ref']} ({option['display_name']})")
        if response.get("stale"):
            lines.append("(stale: provider unreachable)")
        _emit(args, response, "\n".join(lines))
    elif args.app_op == "refresh":
        response = facade.call("refresh", caller)
        _emit(
            args,
            response,
            f"refresh uploaded={response['uploaded']} updated={response['updated']} "
            f"deleted={response['deleted']} fetched={response['fetched']} "
            f"purged={response['purged']}",
        )
    else:
        raise CliError(f"unknown app operation {args.app_op}", EXIT_USAGE)
    return EXIT_OK


class _InProcessFacade:
    """Route facade calls through the IPC request handler so world mode and
    daemon mode share one behavior."""

    def __init__(self, agent: PeerShareAgent):
        self._agent = agent

    def call(self, api: str, caller: AppIdentity, **args) -> dict:
        from .ipc import _handle_request

        response = _handle_request(
            self._agent,
            {
                "api": api,
                "caller": {"platform": caller.platform, "app_id": caller.app_id},
                "args": args,
            },
        )
        if response.get("status") != "ok":
            code = response.get("code", "error")
            exit_code = {
                "no_authenticated_user": EXIT_AUTH,
                protocol.NOT_FOUND: EXIT_NOT_FOUND,
                protocol.ACL_DENIED: EXIT_ACL,
                protocol.VALIDATION_ERROR: EXIT_VALIDATION,
            }.get(code, EXIT_ERROR)
            raise CliError(f"{code}: {response.get('message', '')}", exit_code)
        return response


def cmd_serve(args) -> int:
    if args.world:
        world = World(args.world)
        provider = world.provider
        store = os.path.join(args.world, "server.sqlite")
        network, app_id = world.config["network"], world.config["app_id"]
    else:
        if not args.provider_url or not args.store:
            raise CliError("serve needs --provider-url and --store (or --world)", EXIT_USAGE)
        provider = HttpProviderClient(args.provider_url, network=args.network)
        store = args.store
        network, app_id = args.network, args.app_id
    core = PeerShareServer(
        store_path=store,
        bindings=[ProviderBinding(network, app_id, provider)],
    )
    certfile, keyfile = args.cert, args.key
    if args.no_tls:
        certfile = keyfile = None
    elif not certfile:
        raise CliError("serve needs --cert/--key (or --no-tls for development)", EXIT_USAGE)
    try:
        app = ServerApp(
            core,
            host=args.host,
            port=args.port,
            certfile=certfile,
            keyfile=keyfile,
            poll_interval=args.poll_interval,
            ui_dir=args.ui_dir,
            store_path=store if store != ":memory:" else None,
        )
    except StoreLockedError as exc:
        raise CliError(str(exc), EXIT_ERROR) from None
    except (FileNotFoundError, OSError) as exc:
        raise CliError(f"startup failed: {exc}", EXIT_ERROR) from None
    scheme = "https" if app.tls else "http"
    print(f"listening on {scheme}://{app.host}:{app.port}", file=sys.stderr, flush=True)
    app.serve_forever()
    return EXIT_OK


def cmd_provider(args) -> int:
    provider = MockProvider(network=args.network, state_path=args.state)
    app = ProviderApp(provider, host=args.host, port=args.port)
    print(f"provider listening on {app.url}", file=sys.stderr, flush=True)
    app.serve_forever()
    return EXIT_OK


def cmd_bench(args) -> int:
    with tempfile.TemporaryDirectory(prefix="peershare-bench-") as tmp:
        provider = MockProvider()
        core = PeerShareServer(
            bindings=[ProviderBinding("mocknet", "peershare-app", provider)]
        )
        cert, key = generate_self_signed("localhost", tmp, prefix="bench")
        app = ServerApp(core, certfile=cert, keyfile=key, poll_interval=3600)
        app.start()
        try:
            provider.add_user("bench-user")
            owner = SocialIdentity("mocknet", "bench-user", "Bench User")
            token = provider.issue_token("bench-user", "peershare-app")
            response = core.register(token.token, owner)
            peershare_id = response["peershare_id"]
            friend_creator = AppIdentity("bench", "peershare-bench:0")
            for i in range(args.items_down):
                friend = f"friend-{i}"
                provider.add_user(friend)
                provider.add_friendship("bench-user", friend)
                friend_token = provider.issue_token(friend, "peershare-app")
                friend_identity = SocialIdentity("mocknet", friend, friend)
                friend_ps = core.register(friend_token.token, friend_identity)["peershare_id"]
                item = make_bdaddr_binding(
                    value=os.urandom(16),
                    device_id="d1",
                    owner=friend_identity,
                    creator=friend_creator,
                )
                core.upload(friend_token.token, friend_ps, [item])
            transport = HttpTransport(f"https://{app.host}:{app.port}", pin_path=cert)
            rows = bench_mod.run_scenario(
                transport,
                token.token,
                peershare_id,
                owner,
                runs=args.runs,
                items_up=args.items_up,
            )
        except (TransportError, ChannelError) as exc:
            raise CliError(f"server unreachable: {exc}", EXIT_TRANSPORT) from None
        finally:
            app.stop()
    if args.json:
        print(
            json.dumps(
                {
                    "rows": [
                        {
                            "operation": r.operation,
                            "runs": r.runs,
                            "mean": r.mean,
                            "stddev": r.stddev,
                        }
                        for r in rows
                    ]
                },
                sort_keys=True,
            )
        )
    else:
        print(bench_mod.format_table(rows))
    return EXIT_OK


def cmd_inspect(args) -> int:
    if args.world:
        store = os.path.join(args.world, "server.sqlite")
    elif args.store:
        store = args.store
    else:
        raise CliError("inspect needs --world or --store", EXIT_USAGE)
    if store != ":memory:" and not os.path.exists(store):
        raise CliError(f"no store at {store}", EXIT_NOT_FOUND)
    core = PeerShareServer(store_path=store)
    print(write_inspect(core))
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="peershare")
    parser.add_argument("--config", help="JSON file with flag defaults")
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    parser.add_argument("--world", help="file-backed in-process deployment directory")
    parser.add_argument("--server-url", dest="server_url")
    parser.add_argument("--pin", help="pinned server certificate (PEM)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="run the server")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=0)
    p_serve.add_argument("--store", help="server store path")
    p_serve.add_argument("--provider-url")
    p_serve.add_argument("--network", default="mocknet")
    p_serve.add_argument("--app-id", default="peershare-app")
    p_serve.add_argument("--cert")
    p_serve.add_argument("--key")
    p_serve.add_argument("--no-tls", action="store_true", help="development only")
    p_serve.add_argument("--poll-interval", type=float, default=60.0)
    p_serve.add_argument("--ui-dir")
    p_serve.set_defaults(func=cmd_serve)

    p_provider = sub.add_parser("provider", help="run the mock social provider")
    p_provider.add_argument("--host", default="127.0.0.1")
    p_provider.add_argument("--port", type=int, default=0)
    p_provider.add_argument("--state", help="provider state file")
    p_provider.add_argument("--network", default="mocknet")
    p_provider.set_defaults(func=cmd_provider)

    p_agent = sub.add_parser("agent", help="drive a client agent")
    p_agent.add_argument(
        "agent_op", choices=["login", "refresh", "status", "unregister", "policy", "serve"]
    )
    p_agent.add_argument("--user")
    p_agent.add_argument("--display-name")
    p_agent.add_argument("--data-dir")
    p_agent.add_argument("--socket")
    p_agent.add_argument("--provider-url")
    p_agent.add_argument("--network", default="mocknet")
    p_agent.add_argument("--app-id", default="peershare-app")
    p_agent.add_argument("--refresh-interval", type=float, default=21600.0)
    p_agent.add_argument("--allow-plaintext", action="store_true")
    p_agent.add_argument("--object-id", type=int)
    p_agent.add_argument("--policy", help="all_friends or list:<id>")
    p_agent.add_argument("--server-url", dest="server_url")
    p_agent.add_argument("--pin")
    p_agent.set_defaults(func=cmd_agent)

    p_app = sub.add_parser("app", help="act as an application using the agent")
    p_app.add_argument("app_op", choices=["add", "update", "remove", "list", "my-social", "policies", "refresh"])
    p_app.add_argument("local_id", nargs="?", type=int)
    p_app.add_argument("--user")
    p_app.add_argument("--ipc", help="agent IPC socket (daemon mode)")
    p_app.add_argument("--data-dir", help="agent store (networked one-shot mode)")
    p_app.add_argument("--provider-url")
    p_app.add_argument("--network", default="mocknet")
    p_app.add_argument("--agent-app-id", dest="app_id", default="peershare-app")
    p_app.add_argument("--allow-plaintext", action="store_true")
    p_app.add_argument("--server-url", dest="server_url")
    p_app.add_argument("--pin")
    p_app.add_argument("--platform", default="cli")
    p_app.add_argument("--app-id", dest="app_id_caller", default="peershare-cli:0")
    p_app.add_argument("--type", help="data type tag")
    p_app.add_argument("--value")
    p_app.add_argument("--value-b64")
    p_app.add_argument("--device", help="device id (makes the item device-specific)")
    p_app.add_argument("--policy", help="all_friends or list:<id>")
    p_app.add_argument("--expires", type=int, default=0)
    p_app.add_argument("--algorithm", default="PLAIN")
    p_app.add_argument("--description", default="")
    p_app.add_argument("--public", action="store_true")
    p_app.add_argument("--user-asserted", action="store_true")
    p_app.set_defaults(func=cmd_app)

    p_graph = sub.add_parser("graph", help="mutate or inspect the mock social graph")
    p_graph.add_argument(
        "graph_op",
        choices=[
            "add_user",
            "add_friendship",
            "remove_friendship",
            "create_list",
            "delete_list",
            "add_to_list",
            "remove_from_list",
            "show",
        ],
    )
    p_graph.add_argument("a", nargs="?")
    p_graph.add_argument("b", nargs="?")
    p_graph.add_argument("--display-name")
    p_graph.add_argument("--provider-url")
    p_graph.set_defaults(func=cmd_graph)

    p_bench = sub.add_parser("bench", help="time the upload/download scenario on loopback")
    p_bench.add_argument("--runs", type=int, default=30)
    p_bench.add_argument("--items-up", type=int, default=1)
    p_bench.add_argument("--items-down", type=int, default=5)
    p_bench.set_defaults(func=cmd_bench)

    p_inspect = sub.add_parser("inspect", help="dump the server store")
    p_inspect.add_argument("--store")
    p_inspect.set_defaults(func=cmd_inspect)

    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    # --config supplies defaults; explicit flags win.
    if "--config" not in argv:
        return argv
    index = argv.index("--config")
    config_path = argv[index + 1]
    with open(config_path, encoding="utf-8") as fh:
        defaults = json.load(fh)
    parser.set_defaults(**defaults)
    return argv


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config(parser, argv)
    except (OSError, ValueError, IndexError) as exc:
        print(f"error: bad --config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ValidationFailed,) as exc:
        print(f"error: validation: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except AppAclDeniedError as exc:
        print(f"error: denied: {exc}", file=sys.stderr)
        return EXIT_ACL
    except NotFoundError as exc:
        print(f"error: not found: {exc}", file=sys.stderr)
        return EXIT_NOT_FOUND
    except NotLoggedInError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_AUTH
    except AgentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (TransportError, ChannelError) as exc:
        print(f"error: transport: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except ProviderError as exc:
        print(f"error: provider: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
