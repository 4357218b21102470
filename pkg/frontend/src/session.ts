// Session state and the operations behind the two screens.
//
// The shared screen's rows are built so a policy or object id physically
// cannot appear there, whatever the server sends: the row type has no such
// fields and the builder copies fields one by one.  Policy changes apply
// optimistically and roll back if the server says no.

import { ApiError, ProviderClient, ServerClient } from './api'
import type {
  ItemViewWire,
  OwnedRow,
  PolicyOption,
  PolicyWire,
  SharedRow,
  SocialIdentityWire,
} from './types'
import { samePolicy } from './types'

export interface SessionState {
  token: string
  peershareId: string
  identity: SocialIdentityWire
  policyOptions: PolicyOption[]
  owned: OwnedRow[]
  shared: SharedRow[]
}

export type Listener = (state: SessionState | null) => void

function ownedRow(view: ItemViewWire): OwnedRow {
  return {
    objectId: view.object_id ?? 0,
    dataType: view.data_type,
    dataValue: view.data_value,
    description: view.description,
    deviceId: view.device_id,
    expiresAt: view.expires_at,
    policy: view.sharing_policy ?? { kind: 'all_friends' },
    overridden: view.policy_source === 'user_override',
  }
}

function sharedRow(view: ItemViewWire): SharedRow {
  return {
    dataType: view.data_type,
    dataValue: view.data_value,
    description: view.description,
    deviceId: view.device_id,
    expiresAt: view.expires_at,
    ownerName: view.owner?.social_name ?? '',
    ownerSocialId: view.owner?.social_id ?? '',
  }
}

export class SessionStore {
  state: SessionState | null = null
  private listeners: Listener[] = []

  constructor(
    private readonly provider: ProviderClient,
    private readonly server: ServerClient,
    private readonly appId: string = 'peershare-app',
  ) {}

  subscribe(listener: Listener): void {
    this.listeners.push(listener)
  }

  private notify(): void {
    for (const listener of this.listeners) listener(this.state)
  }

  /** Dev-mode login: token from the mock provider, then register. */
  async login(socialId: string, socialName: string = ''): Promise<void> {
    const token = await this.provider.issueToken(socialId, this.appId)
    const identity: SocialIdentityWire = {
      network: 'mocknet',
      social_id: socialId,
      social_name: socialName || socialId,
    }
    const peershareId = await this.server.register(token, identity)
    const options: PolicyOption[] = [
      { policy: { kind: 'all_friends' }, displayName: 'all friends' },
    ]
    try {
      for (const list of await this.provider.customLists(socialId)) {
        options.push({
          policy: { kind: 'list', list_ref: list.listId },
          displayName: list.displayName,
        })
      }
    } catch {
      // Provider hiccup: all-friends alone still works; lists reappear on reload.
    }
    this.state = {
      token,
      peershareId,
      identity,
      policyOptions: options,
      owned: [],
      shared: [],
    }
    await this.refresh()
  }

  private requireState(): SessionState {
    if (this.state === null) throw new ApiError('no_session', 'not logged in')
    return this.state
  }

  async refresh(): Promise<void> {
    const state = this.requireState()
    let views
    try {
      views = await this.server.download(state.token, state.peershareId)
    } catch (err) {
      if (err instanceof ApiError && err.code === 'auth_error') {
        // Token expired or account gone: back to the login screen.
        this.state = null
        this.notify()
      }
      throw err
    }
    state.owned = views.filter((v) => v.is_owner).map(ownedRow)
    state.shared = views.filter((v) => !v.is_owner).map(sharedRow)
    this.notify()
  }

  /**
   * Apply the new policy to the row immediately, then confirm with the
   * server; on rejection the previous policy comes back.  A NOT_FOUND
   * answer means the item is gone: drop the row.
   */
  async overridePolicy(objectId: number, policy: PolicyWire): Promise<void> {
    const state = this.requireState()
    const row = state.owned.find((r) => r.objectId === objectId)
    if (row === undefined) throw new ApiError('not_found', `no owned item ${objectId}`)
    if (samePolicy(row.policy, policy)) {
      // No-op override is still a server round trip and still succeeds.
      await this.server.overridePolicy(state.token, state.peershareId, objectId, policy)
      row.overridden = true
      this.notify()
      return
    }
    const previous = { policy: row.policy, overridden: row.overridden }
    row.policy = policy
    row.overridden = true
    this.notify()
    try {
      await this.server.overridePolicy(state.token, state.peershareId, objectId, policy)
    } catch (err) {
      if (err instanceof ApiError && err.code === 'not_found') {
        state.owned = state.owned.filter((r) => r.objectId !== objectId)
      } else {
        row.policy = previous.policy
        row.overridden = previous.overridden
      }
      this.notify()
      throw err
    }
  }

  /** Account removal demands the user type their own social id. */
  async unregister(typedConfirmation: string): Promise<void> {
    const state = this.requireState()
    if (typedConfirmation !== state.identity.social_id) {
      throw new ApiError('confirmation_mismatch', 'typed confirmation does not match')
    }
    await this.server.unregister(state.token, state.peershareId)
    this.state = null
    this.notify()
  }

  logout(): void {
    this.state = null
    this.notify()
  }
}
