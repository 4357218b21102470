// Entry point: the bundle is served by the data server under /ui, so the
// server URL is the page origin; the provider URL comes from a query
// parameter (dev deployments run it on a separate loopback port).

import { ProviderClient, ServerClient } from './api'
import { renderApp } from './render'
import { SessionStore } from './session'

const params = new URLSearchParams(window.location.search)
const serverUrl = params.get('server') ?? window.location.origin
const providerUrl = params.get('provider') ?? 'http://127.0.0.1:8471'

const store = new SessionStore(new ProviderClient(providerUrl), new ServerClient(serverUrl))
const root = document.getElementById('app')
if (root) {
  store.subscribe(() => renderApp(root, store))
  renderApp(root, store)
}
